import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aml.bootstrap import (
    basic_ci,
    bias_corrected_estimate,
    bonferroni_level,
    bootstrap_replicates,
    quantile,
    shift_nonnegative,
    simultaneous_ci,
    summarize_bootstrap,
)
from aml.estimator import ExactObjective, RunConfig
from aml.models import NormalModel
from aml.spsa import ParameterSpace
from aml.studies import bias_curve, checkpoint_iterates, replicate_estimates
from aml.tuning import TuningConfig


class IdentityModel:
    """Deterministic simulator whose summary is the parameter itself."""

    p = d = 2
    space = ParameterSpace([0.0, 0.0], [10.0, 10.0])
    nonnegative = (True, True)

    def simulate(self, theta, rng):
        return np.asarray(theta, dtype=float)

    def summarize(self, data):
        return np.asarray(data, dtype=float)


def test_quantile_examples():
    assert quantile([1, 2, 3, 4, 5], 0.5) == 3.0
    assert quantile([1, 2, 3, 4], 0.25) == 1.75
    assert quantile([7.0], 0.3) == 7.0
    with pytest.raises(ValueError):
        quantile([], 0.5)
    with pytest.raises(ValueError):
        quantile([1.0], 1.5)


def test_basic_ci_example():
    reps = np.arange(1.0, 101.0)
    iv = basic_ci(50.0, reps, 0.9)
    assert iv.lower == pytest.approx(100 - quantile(reps, 0.95))
    assert iv.upper == pytest.approx(100 - quantile(reps, 0.05))
    assert not iv.shifted


def test_shift_example():
    lo, hi = shift_nonnegative(-9.09e-7, 5.72e-6)
    assert (lo, hi) == (0.0, 5.72e-6 + 9.09e-7)
    assert hi == pytest.approx(6.629e-6)
    assert shift_nonnegative(1.0, 2.0) == (1.0, 2.0)


def test_basic_ci_shift_keeps_raw():
    # theta_hat and replicates chosen so the raw interval is (-9.09e-7, 5.72e-6)
    theta_hat = 2.0e-6
    reps = np.repeat([2 * theta_hat - 5.72e-6, 2 * theta_hat + 9.09e-7], 50)
    iv = basic_ci(theta_hat, reps, nonnegative=True)
    assert iv.raw_lower == pytest.approx(-9.09e-7, rel=1e-9)
    assert iv.raw_upper == pytest.approx(5.72e-6, rel=1e-9)
    assert iv.shifted and iv.lower == 0.0
    assert iv.upper == pytest.approx(6.629e-6, rel=1e-9)
    unshifted = basic_ci(theta_hat, reps, nonnegative=False)
    assert unshifted.lower < 0 and not unshifted.shifted


def test_bonferroni():
    assert bonferroni_level(0.95, 5) == pytest.approx(0.99)
    assert bonferroni_level(0.99, 2) == pytest.approx(0.995)
    assert bonferroni_level(0.95, 1) == 0.95


def test_simultaneous_wider_than_marginal():
    rng = np.random.default_rng(0)
    reps = rng.normal(size=(400, 3))
    sim = simultaneous_ci(np.zeros(3), reps, 0.95)
    marg = simultaneous_ci(np.zeros(3), reps, 0.95, p=1)
    for a, b in zip(sim, marg):
        assert a.lower < b.lower and a.upper > b.upper


def test_bias_corrected():
    np.testing.assert_allclose(bias_corrected_estimate([1.0, 2.0], [[0.5, 2.0], [1.5, 3.0]]), [1.0, 1.5])
    with pytest.raises(ValueError):
        bias_corrected_estimate([1.0], [[1.0]])


@given(
    arrays(float, 30, elements=st.floats(-10, 10)),
    st.floats(-5, 5),
    st.floats(-100, 100),
    st.floats(0.1, 10),
)
def test_basic_ci_affine_equivariant(reps, theta, shift, scale):
    a = basic_ci(theta, reps, 0.9)
    b = basic_ci(scale * theta + shift, scale * reps + shift, 0.9)
    assert b.lower == pytest.approx(scale * a.lower + shift, abs=1e-8)
    assert b.upper == pytest.approx(scale * a.upper + shift, abs=1e-8)


def test_summarize_bootstrap():
    rng = np.random.default_rng(1)
    reps = rng.normal([1.0, 0.1], 0.2, size=(200, 2))
    res = summarize_bootstrap([1.0, 0.1], reps, 0.95, simultaneous=True, nonnegative=(True, True))
    np.testing.assert_allclose(res.se, reps.std(axis=0, ddof=1))
    assert res.shifted.tolist() == [False, True]
    assert res.ci_lower[1] == 0.0 and res.raw_ci_lower[1] < 0
    assert np.all(res.ci_lower <= res.ci_upper)


def test_replicates_with_exact_estimator_are_degenerate():
    model = IdentityModel()
    reps = bootstrap_replicates([3.0, 4.0], model, RunConfig(), B=5, estimate=lambda s: s)
    np.testing.assert_array_equal(reps, np.tile([3.0, 4.0], (5, 1)))


def test_replicates_reproducible_and_independent():
    model = NormalModel(sample_size=9, dim=1, space=ParameterSpace([-5.0], [5.0]))
    cfg = RunConfig(master_seed=3)
    a = bootstrap_replicates([0.5], model, cfg, B=50, seed_path=(3,), estimate=lambda s: s)
    b = bootstrap_replicates([0.5], model, cfg, B=50, seed_path=(3,), estimate=lambda s: s)
    np.testing.assert_array_equal(a, b)
    assert len(np.unique(a)) == 50
    # exact ML on X-bar: replicate sd is 1/sqrt(9)
    assert 0.22 < a.std(ddof=1) < 0.45


def test_replicates_full_aml_small():
    model = NormalModel(sample_size=25, dim=2, space=ParameterSpace([-5.0, -5.0], [5.0, 5.0]))
    cfg = RunConfig(n=30, n_start_candidates=10, n_starts=2, tuning=TuningConfig(K=400, K0=200))
    reps = bootstrap_replicates([1.0, -1.0], model, cfg, B=3)
    assert reps.shape == (3, 2) and np.all(np.abs(reps - [1.0, -1.0]) < 1.5)
    with pytest.raises(ValueError):
        bootstrap_replicates([1.0, -1.0], model, cfg, B=1)


# repeated-estimate studies


def test_replicate_estimates_and_bias_curve():
    space = ParameterSpace([0.0, 0.0], [10.0, 10.0])
    mu = np.array([4.0, 6.0])
    obj = ExactObjective(lambda t: -np.sum((t - mu) ** 2))
    cfg = RunConfig(n=10, n_start_candidates=10, n_starts=2, tuning=TuningConfig(K=1000, K0=250, b=0.02))
    est = replicate_estimates(obj, space, cfg, R=3)
    assert est.shape == (3, 2) and np.all(np.abs(est - mu) < 0.1)
    snaps = checkpoint_iterates(obj, space, cfg, [10, 500, 1000], R=3)
    assert snaps.shape == (3, 3, 2)
    bias, se = bias_curve(snaps, mu)
    assert np.all(bias[-1] < 0.1) and se.shape == (3, 2)
    bias1, se1 = bias_curve(snaps[:1], None)
    assert np.all(np.isnan(se1)) and np.all(np.isnan(bias1))
    with pytest.raises(ValueError):
        checkpoint_iterates(obj, space, cfg, [10, 2000], R=1)
    with pytest.raises(ValueError):
        checkpoint_iterates(obj, space, cfg, [500, 10], R=1)
