import math

import numpy as np
import pytest
from scipy.integrate import quad

from aml.estimator import (
    ExactObjective,
    RunConfig,
    SimulatedLikelihood,
    estimate_log_likelihood,
    make_objective,
    multi_start_estimate,
    run_aml,
    screen_starting_points,
)
from aml.kde import BandwidthHistory, KdeConfig
from aml.models import NormalModel
from aml.rng import stream
from aml.spsa import ParameterSpace
from aml.tuning import TuningConfig


def quick_config(**kw):
    tuning = dict(K=2000, K0=500, b=0.001)
    tuning.update(kw.pop("tuning", {}))
    base = dict(n=30, n_start_candidates=20, n_starts=2, tuning=TuningConfig(**tuning))
    base.update(kw)
    return RunConfig(**base)


class ConstantModel:
    """Every simulation returns the same summary vector."""

    p = d = 2
    space = ParameterSpace([0.0, 0.0], [1.0, 1.0])
    nonnegative = (False, False)

    def simulate_summaries(self, thetas, n, rng):
        return np.zeros((np.atleast_2d(thetas).shape[0], n, 2))


# likelihood estimates


def smoothed_log_density(s_obs, theta, h2):
    """log of the normal density of X-bar convolved with the (unnormalized) kernel."""
    h = math.sqrt(h2)

    def integrand(x):
        q = (s_obs - x) ** 2 / h2
        k = math.exp(-q / 2) if q < 1 else math.exp(-math.sqrt(q) / 2)
        return math.exp(-0.5 * (x - theta) ** 2) / math.sqrt(2 * math.pi) * k

    val = quad(integrand, theta - 12, theta + 12, points=[s_obs - h, s_obs + h], limit=200, epsabs=1e-14)[0]
    return math.log(val / h)


def test_likelihood_matches_analytic_oracle():
    model = NormalModel(sample_size=1, dim=1, space=ParameterSpace([-10.0], [10.0]))
    s_obs, n = 0.3, 20_000
    h2 = ((4 / 3) ** 0.2 * n ** -0.2) ** 2
    objective = SimulatedLikelihood(model, [s_obs], n)
    rng = stream(11)
    for theta in (0.3, 1.1):
        logs = np.array([objective.log_likelihood([theta], rng, bandwidth=[h2])[0][0] for _ in range(30)])
        se = logs.std(ddof=1) / math.sqrt(len(logs))
        assert abs(logs.mean() - smoothed_log_density(s_obs, theta, h2)) < 3 * se + 1e-3


def test_likelihood_peaks_near_observed():
    model = NormalModel(sample_size=1, dim=1, space=ParameterSpace([-10.0], [10.0]))
    objective = SimulatedLikelihood(model, [0.0], 5000)
    logs, _ = objective.log_likelihood(np.array([[0.0], [1.0], [2.0]]), stream(0))
    assert logs[0] > logs[1] > logs[2]


def test_map_uniform_is_ml_plus_constant():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    ml = estimate_log_likelihood([0.5, 0.5], model, [0.0, 0.0], 50, stream(3))
    mp = estimate_log_likelihood([0.5, 0.5], model, [0.0, 0.0], 50, stream(3), mode="MAP")
    assert mp.log_value - ml.log_value == pytest.approx(-2 * math.log(10.0))
    outside = estimate_log_likelihood([0.5, 6.0], model, [0.0, 0.0], 50, stream(3), mode="MAP")
    assert outside.log_value == -math.inf


def test_constant_simulator_is_finite():
    model = ConstantModel()
    est = estimate_log_likelihood([0.5, 0.5], model, [1e3, 1e3], 10, stream(0))
    assert est.degenerate and np.isfinite(est.log_value) and est.n_points == 1


def test_history_is_updated():
    model = NormalModel(dim=2)
    hist = BandwidthHistory(3)
    objective = SimulatedLikelihood(model, [0.0, 0.0], 40)
    objective.log_likelihood(np.zeros((2, 2)), stream(1), history=hist)
    assert len(hist) == 2


def test_rejects_bad_observed():
    with pytest.raises(ValueError):
        SimulatedLikelihood(NormalModel(dim=2), [0.0, np.nan], 10)
    with pytest.raises(ValueError):
        SimulatedLikelihood(NormalModel(dim=2), [0.0], 10)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(n=1)
    with pytest.raises(ValueError):
        RunConfig(n_starts=10, n_start_candidates=5)
    with pytest.raises(ValueError):
        RunConfig(mode="bayes")
    assert RunConfig(n=77).n2 == 77


# single runs


def surrogate_config(**kw):
    # b is the desired first step as a fraction of the range; 0.02 suits an exact quadratic
    return quick_config(tuning=dict(b=0.02), **kw)


@pytest.mark.parametrize("p", [1, 3, 10])
def test_noise_free_quadratic_converges(p):
    space = ParameterSpace(np.zeros(p), np.full(p, 10.0))
    mu = np.linspace(2.0, 7.0, p)
    objective = ExactObjective(lambda t: -np.sum((t - mu) ** 2))
    for seed in range(3):
        start = space.from_unit(stream(100 + seed).random(p))
        tr = run_aml(start, objective, space, surrogate_config(), stream(seed), early_stop=False)
        assert np.all(np.abs(tr.final_theta - mu) < 0.01 * space.range)


def test_start_at_optimum_stays():
    # with no gradient signal the gain falls back to b*(A+1); the box keeps b*curvature < 2
    space = ParameterSpace([-2.0, -1.0, 0.0], [2.0, 3.0, 4.0])
    mu = np.array([0.3, 1.0, 1.7])
    tr = run_aml(mu, ExactObjective(lambda t: -np.sum((t - mu) ** 2)), space, surrogate_config(), stream(0))
    assert np.all(np.abs(tr.iterates - mu) < 1e-9 * space.range)


def test_run_is_deterministic():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    cfg = quick_config(tuning=dict(K=300, K0=100))
    obj = make_objective(model, [1.0, -1.0], cfg)
    a = run_aml([0.0, 0.0], obj, model.space, cfg, stream(4))
    b = run_aml([0.0, 0.0], obj, model.space, cfg, stream(4))
    np.testing.assert_array_equal(a.iterates, b.iterates)
    c = run_aml([0.0, 0.0], obj, model.space, cfg, stream(5))
    assert not np.array_equal(a.iterates, c.iterates)


def test_trajectory_invariants():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, 0.0], [5.0, 1.0]))
    cfg = quick_config(tuning=dict(K=600, K0=100, b=0.05))
    tr = run_aml([4.9, 0.99], make_objective(model, [4.0, 0.9], cfg), model.space, cfg, stream(6), early_stop=False)
    u = model.space.to_unit(tr.iterates)
    steps = np.abs(np.diff(u, axis=0))
    assert np.all(steps <= 0.1 + 1e-12)
    # every iterate leaves room for the next perturbation
    c_next = np.append(tr.c_k[1:], tr.c_k[-1] * (len(tr.c_k) / (len(tr.c_k) + 1)) ** (1 / 6))
    assert np.all(u[1:] >= c_next[:, None] - 1e-12) and np.all(u[1:] <= 1 - c_next[:, None] + 1e-12)
    assert tr.a_k.shape == (600, 2) and np.all(np.diff(tr.c_k) < 0)
    assert len(tr.diagnostics) == 6


def test_convergence_flag_needs_three_clean_rounds():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    cfg = quick_config(tuning=dict(K=3000, K0=200))
    tr = run_aml([1.0, -1.0], make_objective(model, [1.0, -1.0], cfg), model.space, cfg, stream(7))
    assert tr.converged_at is not None
    last = tr.diagnostics[-3:]
    assert all(not v.growth_detected and not v.a_adjusted for v in last)
    assert tr.n_iterations == tr.converged_at


def test_min_iterations_delays_stop():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    cfg = quick_config(tuning=dict(K=3000, K0=200), min_iterations=2400)
    tr = run_aml([1.0, -1.0], make_objective(model, [1.0, -1.0], cfg), model.space, cfg, stream(7))
    assert tr.n_iterations >= 2400


def test_nonfinite_objective_skips_update():
    def cliff(t):
        return -np.inf if t[0] > 0.5 else -((t[0] - 0.6) ** 2) - (t[1] - 0.5) ** 2

    space = ParameterSpace.unit(2)
    tr = run_aml([0.45, 0.5], ExactObjective(cliff), space, quick_config(tuning=dict(K=200, K0=100, b=0.02)), stream(0))
    assert any("nonfinite" in tags for tags in tr.events.values())
    assert np.all(np.isfinite(tr.iterates))


# multi-start


def two_basins(t):
    return -min(np.sum((t - 2.0) ** 2), np.sum((t - 8.0) ** 2) + 1.0)


def test_screening_keeps_best_in_order():
    space = ParameterSpace([0.0, 0.0], [10.0, 10.0])
    obj = ExactObjective(two_basins)
    starts = screen_starting_points(obj, space, 60, 5, stream(0))
    vals = [two_basins(s) for s in starts]
    assert vals == sorted(vals, reverse=True)
    cands = space.from_unit(stream(0).random((60, 2)))
    assert vals[0] == max(two_basins(c) for c in cands)
    assert screen_starting_points(obj, space, 3, 3, stream(0)).shape == (3, 2)
    with pytest.raises(ValueError):
        screen_starting_points(obj, space, 3, 4, stream(0))


def test_multi_start_finds_global_basin():
    space = ParameterSpace([0.0, 0.0], [10.0, 10.0])
    cfg = quick_config(n_start_candidates=40, n_starts=4)
    res = multi_start_estimate(ExactObjective(two_basins), space, cfg)
    np.testing.assert_allclose(res.theta, [2.0, 2.0], atol=0.1)
    assert res.final_log_liks[res.best_index] == res.final_log_liks.max()
    assert len(res.trajectories) == 4


def test_multi_start_single_start():
    space = ParameterSpace([0.0, 0.0], [10.0, 10.0])
    res = multi_start_estimate(ExactObjective(two_basins), space, quick_config(n_starts=1))
    np.testing.assert_array_equal(res.theta, res.trajectories[0].final_theta)


def test_multi_start_worker_count_invariant():
    model = NormalModel(dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    cfg = quick_config(tuning=dict(K=300, K0=100), n_starts=3)
    obj = make_objective(model, [1.0, -1.0], cfg)
    a = multi_start_estimate(obj, model.space, cfg, seed_path=(0,), workers=1)
    b = multi_start_estimate(obj, model.space, cfg, seed_path=(0,), workers=2)
    np.testing.assert_array_equal(a.theta, b.theta)
    for ta, tb in zip(a.trajectories, b.trajectories):
        np.testing.assert_array_equal(ta.iterates, tb.iterates)
    c = multi_start_estimate(obj, model.space, cfg, seed_path=(1,), workers=1)
    assert not np.array_equal(a.theta, c.theta)


def test_normal_estimate_near_observed_mean():
    model = NormalModel(dim=2, space=ParameterSpace([-20.0, -20.0], [20.0, 20.0]))
    cfg = quick_config(n=100, n_start_candidates=50, n_starts=3, tuning=dict(K=3000, K0=500))
    s_obs = np.array([1.3, -2.1])
    res = multi_start_estimate(make_objective(model, s_obs, cfg), model.space, cfg)
    assert np.all(np.abs(res.theta - s_obs) < 0.3)
