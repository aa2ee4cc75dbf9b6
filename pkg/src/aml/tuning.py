"""Gain calibration and the periodic trend / range / convergence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import betainc

from .spsa import GainSchedule, ParameterSpace, gain_at, gradient_estimate, sample_perturbation


@dataclass(frozen=True)
class TuningConfig:
    K: int = 10000
    K0: int = 1000
    b: float | tuple = 0.001
    c_fraction: float = 0.02
    f: float = 1.5
    n1: int = 25
    n2: int | None = None
    alpha_trend: float = 0.05
    alpha_conv: float = 0.05
    range_span_threshold: float = 0.7
    alpha: float = 1.0
    gamma: float = 1.0 / 6.0

    def __post_init__(self):
        if self.K < 1 or self.K0 < 1 or self.K0 > self.K:
            raise ValueError("need 1 <= K0 <= K")
        if self.f <= 1:
            raise ValueError("adjustment factor f must exceed 1")
        if not 0 < self.c_fraction < 1:
            raise ValueError("c_fraction must lie in (0, 1)")
        if self.n1 < 1 or (self.n2 is not None and self.n2 < 2):
            raise ValueError("n1 >= 1 and n2 >= 2 required")
        for name in ("alpha_trend", "alpha_conv", "range_span_threshold"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if np.any(np.asarray(self.b, dtype=float) <= 0):
            raise ValueError("b must be positive")

    def b_vector(self, p: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.b, dtype=float), (p,)).copy()


@dataclass
class DiagnosticVerdict:
    iteration: int
    trend_detected: np.ndarray
    range_exceeded: np.ndarray
    growth_detected: bool
    consecutive_no_growth: int
    a_adjusted: bool
    converged: bool = False
    trend_pvalues: np.ndarray = field(default=None)
    growth_pvalue: float = float("nan")
    a_before: np.ndarray = field(default=None)
    a_after: np.ndarray = field(default=None)


def student_t_cdf(t: float, df: float) -> float:
    """Student's t CDF through the regularized incomplete beta function."""
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    t2 = t * t
    if t2 < df:
        # near the center df/(df+t^2) rounds to 1; use the complementary form
        tail = 0.5 - 0.5 * float(betainc(0.5, 0.5 * df, t2 / (df + t2)))
    else:
        tail = 0.5 * float(betainc(0.5 * df, 0.5, df / (df + t2)))
    return 1.0 - tail if t > 0 else tail


def _t_sf(t: float, df: float) -> float:
    # upper tail without the 1 - cdf cancellation
    return student_t_cdf(-t, df)


def one_sample_t_pvalue(x) -> float:
    """Two-sided p-value for mean(x) == 0.

    Zero-variance input gives 0.0 for a nonzero common value and 1.0 otherwise.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    mean = x.mean()
    sd = x.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        return 0.0 if mean != 0 else 1.0
    t = mean / (sd / math.sqrt(n))
    return 2.0 * _t_sf(abs(t), n - 1)


def welch_pvalue_greater(old, new) -> float:
    """One-sided Welch test of ``mean(new) > mean(old)``."""
    old = np.asarray(old, dtype=float)
    new = np.asarray(new, dtype=float)
    n1, n2 = old.shape[0], new.shape[0]
    if n1 < 2 or n2 < 2:
        raise ValueError("Welch test needs at least 2 values per sample")
    v1 = old.var(ddof=1) / n1
    v2 = new.var(ddof=1) / n2
    diff = new.mean() - old.mean()
    if v1 + v2 == 0:
        return 0.0 if diff > 0 else 1.0
    t = diff / math.sqrt(v1 + v2)
    df = (v1 + v2) ** 2 / (v1**2 / (n1 - 1) + v2**2 / (n2 - 1))
    return _t_sf(t, df)


def trend_pvalues(iterates) -> np.ndarray:
    it = np.asarray(iterates, dtype=float)
    if it.ndim == 1:
        it = it[:, None]
    if it.shape[0] < 3:
        raise ValueError("trend test needs at least 3 iterates")
    diffs = np.diff(it, axis=0)
    return np.array([one_sample_t_pvalue(diffs[:, i]) for i in range(it.shape[1])])


def trend_test(iterates, alpha_trend: float = 0.05) -> np.ndarray:
    """Per-coordinate t-test on successive differences; True where a drift is detected."""
    return trend_pvalues(iterates) < alpha_trend


def range_test(iterates, space: ParameterSpace, threshold: float = 0.7) -> np.ndarray:
    it = np.asarray(iterates, dtype=float)
    if it.ndim == 1:
        it = it[:, None]
    if it.shape[0] < 2:
        raise ValueError("range test needs at least 2 iterates")
    span = it.max(axis=0) - it.min(axis=0)
    return span > threshold * space.range


def convergence_test(logL_old, logL_new, alpha_conv: float = 0.05) -> bool:
    """True when the log-likelihood has grown significantly."""
    return welch_pvalue_greater(logL_old, logL_new) < alpha_conv


def apply_adjustments(trend_detected, range_exceeded, schedule: GainSchedule, f: float = 1.5):
    """Shrink ``a`` where the range test fired, otherwise grow it where a trend was found.

    Returns the new schedule and whether any coordinate changed.
    """
    if f <= 1:
        raise ValueError("f must exceed 1")
    trend_detected = np.asarray(trend_detected, dtype=bool)
    range_exceeded = np.asarray(range_exceeded, dtype=bool)
    a = schedule.a.copy()
    a = np.where(range_exceeded, a / f, np.where(trend_detected, a * f, a))
    changed = bool(np.any(range_exceeded | trend_detected))
    return (schedule.with_a(a) if changed else schedule), changed


def calibrate_gains(
    theta0,
    space: ParameterSpace,
    cfg: TuningConfig,
    log_lik_pair: Callable,
    rng: np.random.Generator,
    c_reference: float = 1.0,
) -> GainSchedule:
    """Choose ``a``, ``A`` and ``c`` from gradient estimates at the start point.

    ``log_lik_pair(theta_minus, theta_plus, rng)`` must return the two log
    likelihood estimates.  ``c`` is ``c_fraction * c_reference``; the estimator
    works on the unit cube, where the reference range is 1.
    """
    p = space.p
    A = int(math.floor(0.1 * cfg.K))
    c = cfg.c_fraction * c_reference
    draft = GainSchedule(np.ones(p), A, cfg.alpha, c, cfg.gamma)
    _, c1 = gain_at(draft, 1)
    grads = np.empty((cfg.n1, p))
    theta0 = np.asarray(theta0, dtype=float)
    l_max = 0.0
    for j in range(cfg.n1):
        delta = sample_perturbation(rng, p)
        l_minus, l_plus = log_lik_pair(theta0 - c1 * delta, theta0 + c1 * delta, rng)
        grads[j] = gradient_estimate(delta, l_plus, l_minus, c1).g
        l_max = max(l_max, abs(l_minus), abs(l_plus))
    gbar = np.abs(np.median(grads, axis=0))
    # below the rounding resolution of the log-likelihood difference a gradient counts as zero
    resolution = 16 * np.finfo(float).eps * l_max / (2 * c1)
    scale = cfg.b_vector(p) * (A + 1) ** cfg.alpha
    ok = np.isfinite(gbar) & (gbar > resolution)
    a = np.where(ok, scale / np.where(ok, gbar, 1.0), scale)
    return draft.with_a(a)


class ConvergenceMonitor:
    """Tracks the three-clean-rounds-in-a-row rule."""

    def __init__(self, required: int = 3):
        self.required = required
        self.consecutive = 0

    def record(self, growth_detected: bool, a_adjusted: bool) -> bool:
        if growth_detected or a_adjusted:
            self.consecutive = 0
        else:
            self.consecutive += 1
        return self.consecutive >= self.required
