"""Parametric bootstrap around an AML estimate: bias, standard errors, basic intervals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import RunConfig, make_objective, multi_start_estimate, parallel_map
from .models import SimulatorModel
from .rng import stream


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    raw_lower: float
    raw_upper: float
    shifted: bool = False


@dataclass
class BootstrapResult:
    replicates: np.ndarray
    theta_hat: np.ndarray
    bias_corrected: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    simultaneous: bool
    raw_ci_lower: np.ndarray = field(default=None)
    raw_ci_upper: np.ndarray = field(default=None)
    shifted: np.ndarray = field(default=None)


def quantile(values, beta: float) -> float:
    """Empirical quantile with linear interpolation between order statistics."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    return float(np.quantile(values, beta, method="linear"))


def shift_nonnegative(lower: float, upper: float) -> tuple[float, float]:
    """Move an interval that dips below zero to ``[0, width]``."""
    if lower >= 0:
        return lower, upper
    return 0.0, upper - lower


def basic_ci(theta_hat: float, replicates, level: float = 0.95, nonnegative: bool = False) -> Interval:
    """``[2*theta_hat - q(1 - a/2), 2*theta_hat - q(a/2)]`` with ``a = 1 - level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    a = 1.0 - level
    lo = 2.0 * theta_hat - quantile(replicates, 1.0 - a / 2.0)
    hi = 2.0 * theta_hat - quantile(replicates, a / 2.0)
    if nonnegative and lo < 0:
        s_lo, s_hi = shift_nonnegative(lo, hi)
        return Interval(s_lo, s_hi, lo, hi, True)
    return Interval(lo, hi, lo, hi, False)


def bias_corrected_estimate(theta_hat, replicates) -> np.ndarray:
    replicates = np.atleast_2d(np.asarray(replicates, dtype=float))
    if replicates.shape[0] < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    return 2.0 * np.asarray(theta_hat, dtype=float) - replicates.mean(axis=0)


def bonferroni_level(level: float, p: int) -> float:
    return 1.0 - (1.0 - level) / p


def simultaneous_ci(theta_hat, replicates, level: float = 0.95, p: int | None = None, nonnegative=None) -> list[Interval]:
    """Per-coordinate basic intervals at the Bonferroni-adjusted level."""
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    replicates = np.asarray(replicates, dtype=float).reshape(-1, theta_hat.shape[0])
    p = theta_hat.shape[0] if p is None else p
    nonneg = nonnegative or (False,) * theta_hat.shape[0]
    adj = bonferroni_level(level, p)
    return [basic_ci(theta_hat[i], replicates[:, i], adj, nonneg[i]) for i in range(theta_hat.shape[0])]


def summarize_bootstrap(theta_hat, replicates, level: float = 0.95, simultaneous: bool = False, nonnegative=None) -> BootstrapResult:
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    replicates = np.asarray(replicates, dtype=float).reshape(-1, theta_hat.shape[0])
    p = theta_hat.shape[0]
    intervals = simultaneous_ci(theta_hat, replicates, level, p if simultaneous else 1, nonnegative)
    return BootstrapResult(
        replicates=replicates,
        theta_hat=theta_hat,
        bias_corrected=bias_corrected_estimate(theta_hat, replicates),
        se=replicates.std(axis=0, ddof=1),
        ci_lower=np.array([iv.lower for iv in intervals]),
        ci_upper=np.array([iv.upper for iv in intervals]),
        level=level,
        simultaneous=simultaneous,
        raw_ci_lower=np.array([iv.raw_lower for iv in intervals]),
        raw_ci_upper=np.array([iv.raw_upper for iv in intervals]),
        shifted=np.array([iv.shifted for iv in intervals]),
    )


class _ReplicateTask:
    def __init__(self, theta_hat, model, config, seed_path, estimate):
        self.theta_hat = theta_hat
        self.model = model
        self.config = config
        self.seed_path = seed_path
        self.estimate = estimate

    def __call__(self, b):
        rng = stream(self.config.master_seed, *self.seed_path, b, 0)
        s_obs = self.model.summarize(self.model.simulate(self.theta_hat, rng))
        if self.estimate is not None:
            return np.asarray(self.estimate(s_obs), dtype=float)
        objective = make_objective(self.model, s_obs, self.config)
        est = multi_start_estimate(objective, self.model.space, self.config, seed_path=(*self.seed_path, b, 1))
        return est.theta


def bootstrap_replicates(
    theta_hat,
    model: SimulatorModel,
    config: RunConfig,
    B: int,
    seed_path: tuple = (),
    workers: int = 1,
    estimate=None,
) -> np.ndarray:
    """Re-estimate on ``B`` datasets simulated at ``theta_hat``; returns a (B, p) matrix.

    Each replicate runs the full multi-start AML estimate with ``config``
    unless ``estimate`` (a function of the simulated summary vector) is given.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    task = _ReplicateTask(np.asarray(theta_hat, dtype=float), model, config, tuple(seed_path), estimate)
    return np.array(parallel_map(task, range(B), workers))
