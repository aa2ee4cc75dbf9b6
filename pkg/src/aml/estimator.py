"""Approximate maximum likelihood runs: screening, the SPSA loop, multi-start.

The loop works on the unit cube: the search box is mapped affinely to
[0, 1]^p, which makes a single scalar perturbation size meaningful for all
coordinates.  Everything reported back (iterates, final estimates) is in the
model's own coordinates.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kde import BandwidthHistory, KdeConfig, LikelihoodEstimate, kde_log_likelihood_batch, silverman_bandwidth_batch
from .models import Prior, SimulatorModel, UniformPrior
from .rng import stream
from .spsa import (
    ParameterSpace,
    gain_at,
    gradient_estimate,
    project_to_feasible,
    sample_perturbation,
    update_iterate,
)
from .tuning import (
    ConvergenceMonitor,
    DiagnosticVerdict,
    TuningConfig,
    apply_adjustments,
    calibrate_gains,
    range_test,
    trend_pvalues,
    welch_pvalue_greater,
)

logger = logging.getLogger(__name__)

# candidates per batched screening call; bounds peak memory for large models
SCREEN_CHUNK = 50


@dataclass(frozen=True)
class RunConfig:
    n: int = 100
    tuning: TuningConfig = field(default_factory=TuningConfig)
    kde: KdeConfig = field(default_factory=KdeConfig)
    n_start_candidates: int = 1000
    n_starts: int = 5
    mode: str = "ML"
    master_seed: int = 0
    min_iterations: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2 (bandwidth estimation)")
        if not 1 <= self.n_starts <= self.n_start_candidates:
            raise ValueError("need 1 <= n_starts <= n_start_candidates")
        if self.mode not in ("ML", "MAP"):
            raise ValueError("mode must be 'ML' or 'MAP'")
        if self.min_iterations > self.tuning.K:
            raise ValueError("min_iterations cannot exceed K")

    @property
    def K(self) -> int:
        return self.tuning.K

    @property
    def n2(self) -> int:
        return self.tuning.n2 or self.n


class SimulatedLikelihood:
    """KDE likelihood of the observed summaries, estimated from fresh simulations.

    ``log_likelihood`` evaluates a batch of parameter rows.  Bandwidths come
    from, in order of preference: an explicit ``bandwidth``; a shared
    ``history`` (each row's Silverman estimate is pushed, then the moving
    average is used for every row); otherwise each row's own Silverman
    estimate.
    """

    def __init__(self, model: SimulatorModel, s_obs, n: int, kde: KdeConfig = KdeConfig(), prior: Prior | None = None):
        self.model = model
        self.s_obs = np.asarray(s_obs, dtype=float)
        if self.s_obs.shape != (model.d,) or not np.all(np.isfinite(self.s_obs)):
            raise ValueError(f"observed summaries must be a finite {model.d}-vector")
        self.n = n
        self.kde = kde
        self.prior = prior

    def log_likelihood(self, thetas, rng, history: BandwidthHistory | None = None, bandwidth=None):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        samples = self.model.simulate_summaries(thetas, self.n, rng)
        if bandwidth is not None:
            h = np.asarray(bandwidth, dtype=float)
        else:
            h = silverman_bandwidth_batch(samples)
            if history is not None:
                history.push(h)
                h = history.smoothed()
        logs, degenerate = kde_log_likelihood_batch(self.s_obs, samples, h, self.kde)
        if self.prior is not None:
            logs = logs + self.prior.log_density(thetas)
        return logs, degenerate


class ExactObjective:
    """Noise-free objective wrapping a deterministic log-likelihood function of theta."""

    def __init__(self, fn: Callable[[np.ndarray], float]):
        self.fn = fn

    def log_likelihood(self, thetas, rng=None, history=None, bandwidth=None):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.array([float(self.fn(t)) for t in thetas]), np.zeros(len(thetas), dtype=bool)


def estimate_log_likelihood(
    theta,
    model: SimulatorModel,
    s_obs,
    n: int,
    rng: np.random.Generator,
    history: BandwidthHistory | None = None,
    kde: KdeConfig = KdeConfig(),
    mode: str = "ML",
    prior: Prior | None = None,
) -> LikelihoodEstimate:
    """Single-point version of :meth:`SimulatedLikelihood.log_likelihood`.

    In MAP mode the prior's log density is added (a uniform prior on the
    model's box when none is given); outside the prior's support the result
    is ``-inf``.
    """
    if mode == "MAP" and prior is None:
        prior = UniformPrior(model.space)
    objective = SimulatedLikelihood(model, s_obs, n, kde, prior if mode == "MAP" else None)
    logs, degenerate = objective.log_likelihood(theta, rng, history=history)
    return LikelihoodEstimate(float(logs[0]), 1 if degenerate[0] else n, bool(degenerate[0]))


@dataclass
class RunTrajectory:
    iterates: np.ndarray
    c_k: np.ndarray
    a_k: np.ndarray
    log_lik_checks: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    events: dict = field(default_factory=dict)
    converged_at: int | None = None
    initial_a: np.ndarray | None = None

    @property
    def final_theta(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def n_iterations(self) -> int:
        return self.iterates.shape[0] - 1


def _run_diagnostics(k, window, schedule, objective, to_theta, history, config, monitor, rng):
    tcfg = config.tuning
    unit = ParameterSpace.unit(window.shape[1])
    pvals = trend_pvalues(window)
    trend = pvals < tcfg.alpha_trend
    ranged = range_test(window, unit, tcfg.range_span_threshold)

    n2 = config.n2
    pts = to_theta(np.concatenate([np.repeat(window[:1], n2, axis=0), np.repeat(window[-1:], n2, axis=0)]))
    bw = history.smoothed() if len(history) else None
    logs, _ = objective.log_likelihood(pts, rng, bandwidth=bw)
    old, new = logs[:n2], logs[n2:]
    if np.all(np.isfinite(logs)):
        growth_p = welch_pvalue_greater(old, new)
    else:
        growth_p = 0.0 if np.mean(new) > np.mean(old) else 1.0
    growth = growth_p < tcfg.alpha_conv

    new_schedule, adjusted = apply_adjustments(trend, ranged, schedule, tcfg.f)
    converged = monitor.record(growth, adjusted)
    verdict = DiagnosticVerdict(
        iteration=k,
        trend_detected=trend,
        range_exceeded=ranged,
        growth_detected=bool(growth),
        consecutive_no_growth=monitor.consecutive,
        a_adjusted=adjusted,
        converged=converged,
        trend_pvalues=pvals,
        growth_pvalue=float(growth_p),
        a_before=schedule.a.copy(),
        a_after=new_schedule.a.copy(),
    )
    return verdict, new_schedule, float(np.mean(new))


def run_aml(
    start,
    objective,
    space: ParameterSpace,
    config: RunConfig,
    rng: np.random.Generator,
    early_stop: bool = True,
) -> RunTrajectory:
    """One SPSA ascent from ``start``; stops after three clean diagnostic rounds or at K."""
    p = space.p
    unit = ParameterSpace.unit(p)
    tcfg = config.tuning
    history = BandwidthHistory(config.kde.smoothing_window)
    to_theta = space.from_unit

    def pair(u_minus, u_plus, rng):
        logs, _ = objective.log_likelihood(to_theta(np.stack([u_minus, u_plus])), rng, history=history)
        return logs[0], logs[1]

    u = project_to_feasible(space.to_unit(start), unit, tcfg.c_fraction)
    schedule = calibrate_gains(u, unit, tcfg, pair, rng)
    initial_a = schedule.a.copy()

    iterates = [u]
    a_hist, c_hist = [], []
    events: dict = {0: ["calibration"]}
    checks, verdicts = [], []
    monitor = ConvergenceMonitor()
    converged_at = None

    for k in range(1, tcfg.K + 1):
        a_k, c_k = gain_at(schedule, k)
        delta = sample_perturbation(rng, p)
        l_minus, l_plus = pair(u - c_k * delta, u + c_k * delta, rng)
        _, c_next = gain_at(schedule, k + 1)
        if np.isfinite(l_minus) and np.isfinite(l_plus):
            grad = gradient_estimate(delta, l_plus, l_minus, c_k)
            u = update_iterate(u, grad, a_k, unit, c_next, None)
        else:
            events.setdefault(k, []).append("nonfinite")
            u = project_to_feasible(u, unit, c_next)
        iterates.append(u)
        a_hist.append(a_k)
        c_hist.append(c_k)

        if k % tcfg.K0 == 0:
            window = np.asarray(iterates[k - tcfg.K0 :])
            verdict, schedule, mean_log = _run_diagnostics(
                k, window, schedule, objective, to_theta, history, config, monitor, rng
            )
            verdicts.append(verdict)
            checks.append((k, mean_log))
            tags = events.setdefault(k, [])
            if np.any(verdict.range_exceeded):
                tags.append("range")
            if np.any(verdict.trend_detected & ~verdict.range_exceeded):
                tags.append("trend")
            if verdict.growth_detected:
                tags.append("growth")
            if verdict.converged and k >= config.min_iterations and converged_at is None:
                converged_at = k
                tags.append("converged")
                logger.debug("converged at iteration %d", k)
                if early_stop:
                    break

    return RunTrajectory(
        iterates=to_theta(np.asarray(iterates)),
        c_k=np.asarray(c_hist),
        a_k=np.asarray(a_hist).reshape(-1, p),
        log_lik_checks=checks,
        diagnostics=verdicts,
        events=events,
        converged_at=converged_at,
        initial_a=initial_a,
    )


def screen_starting_points(objective, space: ParameterSpace, n_candidates: int, n_starts: int, rng) -> np.ndarray:
    """Uniform candidates on the box, ranked by one likelihood estimate each.

    Returns the best ``n_starts`` rows; ties keep draw order.
    """
    if not 1 <= n_starts <= n_candidates:
        raise ValueError("need 1 <= n_starts <= n_candidates")
    candidates = space.from_unit(rng.random((n_candidates, space.p)))
    logs = np.concatenate(
        [
            objective.log_likelihood(candidates[i : i + SCREEN_CHUNK], rng)[0]
            for i in range(0, n_candidates, SCREEN_CHUNK)
        ]
    )
    order = np.argsort(-logs, kind="stable")
    return candidates[order[:n_starts]]


def parallel_map(fn, items: Sequence, workers: int = 1) -> list:
    """Ordered map; uses a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class MultiStartResult:
    theta: np.ndarray
    best_index: int
    starts: np.ndarray
    final_log_liks: np.ndarray
    trajectories: list


class _RunTask:
    def __init__(self, objective, space, config, seed_path, early_stop):
        self.objective = objective
        self.space = space
        self.config = config
        self.seed_path = seed_path
        self.early_stop = early_stop

    def __call__(self, item):
        index, start = item
        rng = stream(self.config.master_seed, *self.seed_path, 1, index)
        return run_aml(start, self.objective, self.space, self.config, rng, early_stop=self.early_stop)


def multi_start_estimate(
    objective,
    space: ParameterSpace,
    config: RunConfig,
    seed_path: tuple = (),
    workers: int = 1,
    early_stop: bool = True,
) -> MultiStartResult:
    """Screen starts, run the ascent from each, keep the best by a fresh likelihood estimate.

    ``seed_path`` addresses this estimate's streams below ``config.master_seed``
    so that replicated estimates stay independent and reproducible.
    """
    screen_rng = stream(config.master_seed, *seed_path, 0)
    starts = screen_starting_points(objective, space, config.n_start_candidates, config.n_starts, screen_rng)
    task = _RunTask(objective, space, config, tuple(seed_path), early_stop)
    trajectories = parallel_map(task, list(enumerate(starts)), workers)
    finals = np.array([t.final_theta for t in trajectories])
    final_rng = stream(config.master_seed, *seed_path, 2)
    logs, _ = objective.log_likelihood(finals, final_rng)
    best = int(np.argsort(-logs, kind="stable")[0])
    return MultiStartResult(finals[best].copy(), best, starts, logs, trajectories)


def make_objective(model: SimulatorModel, s_obs, config: RunConfig, prior: Prior | None = None) -> SimulatedLikelihood:
    if config.mode == "MAP" and prior is None:
        prior = UniformPrior(model.space)
    return SimulatedLikelihood(model, s_obs, config.n, config.kde, prior if config.mode == "MAP" else None)
