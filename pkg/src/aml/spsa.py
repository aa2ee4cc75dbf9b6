"""Simultaneous-perturbation gradient ascent primitives on a box."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

STEP_CLAMP_FRACTION = 0.1


@dataclass(frozen=True)
class ParameterSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        width = upper - lower
        if not np.all(np.isfinite(width)) or np.any(width <= 0):
            raise ValueError("every coordinate needs finite lower < upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, p: int) -> "ParameterSpace":
        return cls(np.zeros(p), np.ones(p))

    @property
    def p(self) -> int:
        return self.lower.shape[0]

    @property
    def range(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def to_unit(self, theta):
        return (np.asarray(theta, dtype=float) - self.lower) / self.range

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=float) * self.range


@dataclass(frozen=True)
class GainSchedule:
    """``a_k = a / (k + A)**alpha`` (per coordinate) and ``c_k = c / k**gamma``."""

    a: np.ndarray
    A: int
    alpha: float = 1.0
    c: float = 0.02
    gamma: float = 1.0 / 6.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if np.any(~np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("gain a must be finite and positive")
        if self.A < 0 or self.alpha <= 0 or self.c <= 0 or self.gamma <= 0:
            raise ValueError("invalid gain constants")
        object.__setattr__(self, "a", a)

    def with_a(self, a) -> "GainSchedule":
        return replace(self, a=np.asarray(a, dtype=float))


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    logL_plus: float
    logL_minus: float
    c_k: float


def gain_at(schedule: GainSchedule, k: int):
    if k < 1:
        raise ValueError("gain sequences start at k = 1")
    a_k = schedule.a / (k + schedule.A) ** schedule.alpha
    c_k = schedule.c / k**schedule.gamma
    return a_k, c_k


def sample_perturbation(rng: np.random.Generator, p: int) -> np.ndarray:
    """Rademacher vector of length ``p`` with entries in {-1.0, +1.0}."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return 2.0 * rng.integers(0, 2, size=p) - 1.0


def gradient_estimate(delta, logL_plus: float, logL_minus: float, c_k: float) -> GradientEstimate:
    if c_k <= 0:
        raise ValueError("c_k must be positive")
    if not (np.isfinite(logL_plus) and np.isfinite(logL_minus)):
        raise ValueError("log-likelihood values must be finite")
    delta = np.asarray(delta, dtype=float)
    g = delta * ((logL_plus - logL_minus) / (2.0 * c_k))
    return GradientEstimate(g, float(logL_plus), float(logL_minus), float(c_k))


def project_to_feasible(theta, space: ParameterSpace, c_k: float, delta=None) -> np.ndarray:
    """Closest point from which both ``theta +- c_k*delta`` stay inside the box.

    For a box and a +-1 perturbation this is a per-coordinate clamp into
    ``[lower + c_k, upper - c_k]``, so ``delta`` does not change the answer.
    Coordinates narrower than ``2*c_k`` go to the box midpoint.
    """
    theta = np.asarray(theta, dtype=float)
    lo = space.lower + c_k
    hi = space.upper - c_k
    out = np.clip(theta, lo, hi)
    empty = lo > hi
    if np.any(empty):
        out = np.where(empty, 0.5 * (space.lower + space.upper), out)
    return out


def clamp_step(step, space: ParameterSpace) -> np.ndarray:
    limit = STEP_CLAMP_FRACTION * space.range
    return np.clip(np.asarray(step, dtype=float), -limit, limit)


def update_iterate(theta, grad: GradientEstimate, a_k, space: ParameterSpace, c_next: float, delta_next=None):
    """Gradient step, clamped to 10% of the range, then projected for the next perturbation."""
    step = clamp_step(np.asarray(a_k, dtype=float) * grad.g, space)
    return project_to_feasible(np.asarray(theta, dtype=float) + step, space, c_next, delta_next)
