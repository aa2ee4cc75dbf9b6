"""Data-generating processes with summary statistics, plus priors for MAP mode.

A model exposes ``simulate``/``summarize`` for single datasets and a batched
``simulate_summaries`` that the estimator uses in its inner loop.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .spsa import ParameterSpace


@runtime_checkable
class SimulatorModel(Protocol):
    p: int
    d: int
    space: ParameterSpace
    nonnegative: tuple

    def simulate(self, theta, rng: np.random.Generator) -> np.ndarray: ...

    def summarize(self, dataset) -> np.ndarray: ...

    def simulate_summaries(self, thetas, n: int, rng: np.random.Generator) -> np.ndarray:
        """Summaries of ``n`` datasets at each row of ``thetas``; shape (m, n, d)."""
        ...


class Prior(Protocol):
    def log_density(self, theta) -> float | np.ndarray: ...


class UniformPrior:
    """Flat prior on a box; MAP under it coincides with ML on that box."""

    def __init__(self, space: ParameterSpace):
        self.space = space
        self._log_const = -float(np.log(space.range).sum())

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        inside = np.all((theta >= self.space.lower) & (theta <= self.space.upper), axis=-1)
        out = np.where(inside, self._log_const, -np.inf)
        return float(out) if out.ndim == 0 else out


def prior_uniform(space: ParameterSpace) -> UniformPrior:
    return UniformPrior(space)


def normal_summarize_transformed(xbar) -> np.ndarray:
    """Ten nonlinear-mixing summaries of a 10-vector of means.

    Order: x1, x2+x3, x2-x3, x4+x5, x5+x6, x6+x4, x7, x7+x8, x9, x9*x10.
    Works on the last axis, so batches of mean vectors are accepted.
    """
    x = np.asarray(xbar, dtype=float)
    if x.shape[-1] != 10:
        raise ValueError("transformed summaries need 10-dimensional means")
    c = [x[..., i] for i in range(10)]
    return np.stack(
        [
            c[0],
            c[1] + c[2],
            c[1] - c[2],
            c[3] + c[4],
            c[4] + c[5],
            c[5] + c[3],
            c[6],
            c[6] + c[7],
            c[8],
            c[8] * c[9],
        ],
        axis=-1,
    )


class NormalModel:
    """Multivariate normal with unit covariance; the parameter is the mean vector."""

    def __init__(self, sample_size: int = 1, summary_set: str = "plain", dim: int = 10, space: ParameterSpace | None = None):
        if summary_set not in ("plain", "transformed"):
            raise ValueError(f"unknown summary_set {summary_set!r}")
        if summary_set == "transformed" and dim != 10:
            raise ValueError("transformed summaries are defined for dim = 10 only")
        if sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        self.sample_size = sample_size
        self.summary_set = summary_set
        self.p = self.d = dim
        self.space = space or ParameterSpace(np.full(dim, -100.0), np.full(dim, 100.0))
        self.nonnegative = (False,) * dim

    def simulate(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + rng.standard_normal((self.sample_size, self.p))

    def summarize(self, dataset):
        data = np.asarray(dataset, dtype=float).reshape(-1, self.p)
        return self._summaries_from_means(data.mean(axis=0))

    def _summaries_from_means(self, xbar):
        if self.summary_set == "plain":
            return xbar
        return normal_summarize_transformed(xbar)

    def simulate_summaries(self, thetas, n, rng):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        m = thetas.shape[0]
        noise = rng.standard_normal((m, n, self.sample_size, self.p))
        xbar = thetas[:, None, :] + noise.mean(axis=2)
        return self._summaries_from_means(xbar)

    def ml_estimate(self, dataset):
        return np.asarray(dataset, dtype=float).reshape(-1, self.p).mean(axis=0)

    def load_dataset(self, path):
        data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != self.p:
            raise ValueError(f"{path}: expected {self.p} columns, found {data.shape[1]}")
        return data


def interdeparture_times(U, W) -> np.ndarray:
    """Interdeparture times of a FCFS single-server queue.

    ``U`` are service times and ``W`` interarrival times along the last axis.
    Uses the departure-time form ``D_m = max(A_m, D_{m-1}) + U_m`` (``A`` the
    arrival times), unrolled as a running maximum so batches vectorize.
    """
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    arrivals = np.cumsum(W, axis=-1)
    served = np.cumsum(U, axis=-1)
    departures = served + np.maximum.accumulate(arrivals - (served - U), axis=-1)
    return np.diff(departures, axis=-1, prepend=0.0)


_QUARTILES = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


def mg1_summarize(Y) -> np.ndarray:
    """(min, Q1, median, Q3, max) along the last axis, linear-interpolated quantiles."""
    Y = np.asarray(Y, dtype=float)
    M = Y.shape[-1]
    if M < 4:
        raise ValueError("need at least 4 interdeparture times")
    ys = np.sort(Y, axis=-1)
    pos = _QUARTILES * (M - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, M - 1)
    frac = pos - lo
    return ys[..., lo] + frac * (ys[..., hi] - ys[..., lo])


class Mg1Model:
    """M/G/1 queue observed through interdeparture times.

    theta = (service lower bound, service width, arrival rate); service times
    are Uniform[theta1, theta1 + theta2], interarrival times Exponential(rate theta3).
    """

    p = 3
    d = 5

    def __init__(self, M: int = 100, space: ParameterSpace | None = None):
        if M < 4:
            raise ValueError("M must be >= 4")
        self.M = M
        self.space = space or ParameterSpace([0.0, 0.0, 0.05], [10.0, 10.0, 10.0])
        self.nonnegative = (True, True, True)

    @staticmethod
    def check_theta(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != 3 or np.any(~np.isfinite(theta)):
            raise ValueError("M/G/1 theta must be a finite 3-vector")
        # theta2 == 0 (point-mass service time) is allowed: perturbations may touch the box edge
        if np.any(theta[..., 0] < 0) or np.any(theta[..., 1] < 0) or np.any(theta[..., 2] <= 0):
            raise ValueError("M/G/1 requires theta1 >= 0, theta2 >= 0, theta3 > 0")
        return theta

    def simulate(self, theta, rng):
        theta = self.check_theta(theta)
        U = theta[0] + theta[1] * rng.random(self.M)
        W = rng.exponential(1.0 / theta[2], self.M)
        return interdeparture_times(U, W)

    def summarize(self, dataset):
        return mg1_summarize(dataset)

    def simulate_summaries(self, thetas, n, rng):
        thetas = self.check_theta(np.atleast_2d(thetas))
        m = thetas.shape[0]
        t1, t2, t3 = (thetas[:, i, None, None] for i in range(3))
        U = t1 + t2 * rng.random((m, n, self.M))
        W = rng.standard_exponential((m, n, self.M)) / t3
        return mg1_summarize(interdeparture_times(U, W))

    def ml_estimate(self, dataset):
        return None

    def load_dataset(self, path):
        data = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 1:
            raise ValueError(f"{path}: expected one interdeparture time per row")
        return data[:, 0]
