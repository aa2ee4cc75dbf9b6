"""Serialization of run results: JSON documents and CSV tables.

Floats are written with Python's shortest round-trip repr, so parsing a file
gives back exactly the numbers that were written.  Non-finite values become
``null`` in JSON and ``nan``/``inf`` in CSV.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .estimator import MultiStartResult, RunTrajectory
from .tuning import DiagnosticVerdict


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: str | Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def verdict_record(v: DiagnosticVerdict) -> dict:
    return {
        "iteration": v.iteration,
        "trend_detected": v.trend_detected,
        "range_exceeded": v.range_exceeded,
        "growth_detected": v.growth_detected,
        "growth_pvalue": v.growth_pvalue,
        "trend_pvalues": v.trend_pvalues,
        "consecutive_no_growth": v.consecutive_no_growth,
        "a_adjusted": v.a_adjusted,
        "a_before": v.a_before,
        "a_after": v.a_after,
        "converged": v.converged,
    }


def trajectory_summary(tr: RunTrajectory, start) -> dict:
    return {
        "start": start,
        "final_theta": tr.final_theta,
        "n_iterations": tr.n_iterations,
        "converged_at": tr.converged_at,
        "initial_a": tr.initial_a,
        "log_lik_checks": [[k, v] for k, v in tr.log_lik_checks],
        "diagnostics": [verdict_record(v) for v in tr.diagnostics],
    }


def estimate_record(est: MultiStartResult) -> dict:
    return {
        "theta_hat": est.theta,
        "best_index": est.best_index,
        "final_log_likelihoods": est.final_log_liks,
        "starts": [trajectory_summary(tr, s) for tr, s in zip(est.trajectories, est.starts)],
    }


def write_trajectory_csv(path: str | Path, tr: RunTrajectory):
    """One row per iteration: theta, c_k and a_k (unit-cube gains), event tags."""
    p = tr.iterates.shape[1]
    header = (
        ["iteration"]
        + [f"theta_{i + 1}" for i in range(p)]
        + ["c_k"]
        + [f"a_k_{i + 1}" for i in range(p)]
        + ["events"]
    )
    rows = []
    for k in range(tr.iterates.shape[0]):
        if k == 0:
            c, a = [math.nan], [math.nan] * p
        else:
            c, a = [tr.c_k[k - 1]], list(tr.a_k[k - 1])
        rows.append([str(k)] + list(tr.iterates[k]) + c + a + [";".join(tr.events.get(k, []))])
    write_csv(path, header, rows)
