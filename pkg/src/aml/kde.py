"""Kernel density estimation of the summary-statistic likelihood.

Bandwidth matrices are always diagonal and are passed around as 1-d arrays
holding the *squared* bandwidths (the diagonal of H).  Log values returned
here use an unnormalized kernel (peak value 1), so they are only defined up
to an additive constant that depends on the summary dimension d.  Every
downstream use takes differences of log values with equal d.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SD_FLOOR_ABS = 1e-8
SD_FLOOR_REL = 1e-8
DEFAULT_ZERO_THRESHOLD = np.finfo(float).tiny * 1e3
DEFAULT_SMOOTHING_WINDOW = 10


@dataclass(frozen=True)
class KdeConfig:
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD

    def __post_init__(self):
        if self.smoothing_window < 1:
            raise ValueError("smoothing_window must be >= 1")
        if not 0 < self.zero_threshold <= np.finfo(float).tiny * 1e6:
            raise ValueError("zero_threshold must lie in (0, tiny * 1e6]")


@dataclass(frozen=True)
class LikelihoodEstimate:
    log_value: float
    n_points: int
    degenerate: bool = False


def modified_gaussian_kernel(q):
    """Heavy-tailed Gaussian kernel as a function of the whitened squared distance.

    ``exp(-q/2)`` inside the unit ellipsoid, ``exp(-sqrt(q)/2)`` outside.
    Accepts scalars or arrays.
    """
    return np.exp(log_kernel(q))


def log_kernel(q):
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(np.isnan(q)):
        raise ValueError("kernel argument must be a nonnegative squared distance")
    out = np.where(q < 1.0, -0.5 * q, -0.5 * np.sqrt(q))
    return out if out.ndim else float(out)


def _bandwidth_factor(n: int, d: int) -> float:
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4))


def silverman_bandwidth(samples, n: int | None = None) -> np.ndarray:
    """Diagonal normal-reference bandwidth, returned as squared entries.

    Parameters
    ----------
    samples : array_like, shape (n, d)
        Simulated summary vectors.
    n : int, optional
        Sample count; must equal ``len(samples)`` when given.

    Returns
    -------
    ndarray, shape (d,)
        ``(sd_i * (4/(d+2))**(1/(d+4)) * n**(-1/(d+4)))**2`` per coordinate.
        Standard deviations are floored at ``max(1e-8, 1e-8*|mean_i|)`` so the
        result is always positive definite.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if n is not None and n != x.shape[0]:
        raise ValueError(f"n={n} does not match {x.shape[0]} samples")
    return silverman_bandwidth_batch(x[None])[0]


def silverman_bandwidth_batch(samples: np.ndarray) -> np.ndarray:
    """Vectorized :func:`silverman_bandwidth` over a leading batch axis.

    ``samples`` has shape (m, n, d); the result has shape (m, d).
    """
    m, n, d = samples.shape
    if n < 2:
        raise ValueError("bandwidth estimation needs at least 2 samples")
    sd = samples.std(axis=1, ddof=1)
    floor = np.maximum(SD_FLOOR_ABS, SD_FLOOR_REL * np.abs(samples.mean(axis=1)))
    sd = np.maximum(sd, floor)
    return (sd * _bandwidth_factor(n, d)) ** 2


def smooth_bandwidth(history: Sequence[np.ndarray], window: int) -> np.ndarray:
    if len(history) == 0:
        raise ValueError("bandwidth history is empty")
    if window < 1:
        raise ValueError("window must be >= 1")
    recent = np.asarray(list(history)[-window:], dtype=float)
    return recent.mean(axis=0)


class BandwidthHistory:
    """Moving-average store for per-iteration bandwidth estimates."""

    def __init__(self, window: int = DEFAULT_SMOOTHING_WINDOW):
        self.window = window
        self._items: deque = deque(maxlen=window)

    def __len__(self):
        return len(self._items)

    def push(self, diag):
        diag = np.asarray(diag, dtype=float)
        for row in np.atleast_2d(diag):
            self._items.append(row.copy())

    def smoothed(self) -> np.ndarray:
        return smooth_bandwidth(self._items, self.window)


def _log_density(target, samples, h_diag):
    # target (..., d), samples (..., n, d), h_diag (..., d)
    diff = samples - target[..., None, :]
    q = np.einsum("...nd,...nd->...n", diff, diff / h_diag[..., None, :])
    lk = log_kernel(q)
    top = lk.max(axis=-1)
    lse = top + np.log(np.exp(lk - top[..., None]).sum(axis=-1))
    n = samples.shape[-2]
    return lse - np.log(n) - 0.5 * np.log(h_diag).sum(axis=-1)


def _check(target, samples, h_diag):
    target = np.asarray(target, dtype=float)
    samples = np.asarray(samples, dtype=float)
    h_diag = np.asarray(h_diag, dtype=float)
    if target.ndim == 0:
        target = target[None]
    if samples.ndim == 1:
        samples = samples[:, None] if target.shape[0] == 1 else samples[None, :]
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    h_diag = np.broadcast_to(h_diag, target.shape) if h_diag.ndim == 0 else h_diag
    d = target.shape[0]
    if samples.shape[1] != d or h_diag.shape != (d,):
        raise ValueError(
            f"dimension mismatch: target d={d}, samples {samples.shape}, H {h_diag.shape}"
        )
    if np.any(h_diag <= 0):
        raise ValueError("bandwidth entries must be positive")
    return target, samples, h_diag


def nearest_neighbor_fallback(target, samples, h_diag) -> LikelihoodEstimate:
    """KDE using only the sample closest to ``target`` (raw Euclidean distance).

    Ties go to the lowest index.
    """
    target, samples, h_diag = _check(target, samples, h_diag)
    idx = int(np.argmin(((samples - target) ** 2).sum(axis=1)))
    log_value = float(_log_density(target, samples[idx : idx + 1], h_diag))
    return LikelihoodEstimate(log_value, 1, True)


def kde_log_likelihood(target, samples, h_diag, cfg: KdeConfig = KdeConfig()) -> LikelihoodEstimate:
    target, samples, h_diag = _check(target, samples, h_diag)
    log_value = float(_log_density(target, samples, h_diag))
    if log_value < np.log(cfg.zero_threshold):
        return nearest_neighbor_fallback(target, samples, h_diag)
    return LikelihoodEstimate(log_value, samples.shape[0], False)


def kde_log_likelihood_batch(target, samples, h_diag, cfg: KdeConfig = KdeConfig()):
    """Batched estimate against one target.

    ``samples`` is (m, n, d) and ``h_diag`` is (d,) or (m, d).  Returns the
    log values (m,) and a boolean degeneracy mask (m,).
    """
    target = np.asarray(target, dtype=float)
    samples = np.asarray(samples, dtype=float)
    h = np.broadcast_to(np.asarray(h_diag, dtype=float), (samples.shape[0], samples.shape[2]))
    logs = _log_density(np.broadcast_to(target, h.shape), samples, h)
    degenerate = logs < np.log(cfg.zero_threshold)
    for j in np.flatnonzero(degenerate):
        logs[j] = nearest_neighbor_fallback(target, samples[j], h[j]).log_value
    return logs, degenerate
