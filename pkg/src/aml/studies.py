"""Repeated-estimate studies on one observed dataset (estimator spread, bias curves)."""

from __future__ import annotations

import numpy as np

from .estimator import RunConfig, multi_start_estimate, parallel_map
from .spsa import ParameterSpace


class _ReplicateEstimate:
    def __init__(self, objective, space, config, checkpoints=None, prefix=()):
        self.prefix = tuple(prefix)
        self.objective = objective
        self.space = space
        self.config = config
        self.checkpoints = checkpoints

    def __call__(self, r):
        early = self.checkpoints is None
        est = multi_start_estimate(self.objective, self.space, self.config, seed_path=(*self.prefix, r), early_stop=early)
        if early:
            return est.theta
        iterates = est.trajectories[est.best_index].iterates
        return iterates[list(self.checkpoints)]


def replicate_estimates(objective, space: ParameterSpace, config: RunConfig, R: int, workers: int = 1, seed_path=()) -> np.ndarray:
    """``R`` independent multi-start estimates on the same observed summaries, shape (R, p)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    return np.array(parallel_map(_ReplicateEstimate(objective, space, config, prefix=seed_path), range(R), workers))


def checkpoint_iterates(objective, space, config: RunConfig, checkpoints, R: int, workers: int = 1, seed_path=()) -> np.ndarray:
    """Iterates of the selected start at each checkpoint, without early stopping; shape (R, C, p)."""
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints or any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be a nonempty increasing list")
    if checkpoints[0] < 1 or checkpoints[-1] > config.K:
        raise ValueError(f"checkpoints must lie in [1, K={config.K}]")
    task = _ReplicateEstimate(objective, space, config, checkpoints, seed_path)
    return np.array(parallel_map(task, range(R), workers))


def bias_curve(snapshots: np.ndarray, reference=None):
    """Absolute bias and standard error per checkpoint and coordinate.

    ``snapshots`` is (R, C, p).  Without a reference the bias is NaN; with a
    single replicate the standard error is NaN.
    """
    R = snapshots.shape[0]
    mean = snapshots.mean(axis=0)
    if reference is None:
        bias = np.full_like(mean, np.nan)
    else:
        bias = np.abs(mean - np.asarray(reference, dtype=float))
    se = snapshots.std(axis=0, ddof=1) if R > 1 else np.full_like(mean, np.nan)
    return bias, se
