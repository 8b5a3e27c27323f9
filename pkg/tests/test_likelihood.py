import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import available_backends, random_dataset
from defcure.data import CompetingRisksDataset, IntervalObservation
from defcure.distributions import (Family, LinkedParams, _ig_log_survival_scalar,
                                   ig_log_survival, log_interval_probability)
from defcure.errors import ConfigurationError
from defcure.likelihood import (LOG_FLOOR, LikelihoodValue, LogLikelihood,
                                dataset_log_likelihood, obs_log_likelihood)

G = LinkedParams("gompertz", [[-0.5, 0.0], [-0.5, 0.0]], [[math.log(0.3), 0.0]] * 2)


def test_censored_contribution():
    obs = IntervalObservation(2.0, math.inf, 0, (0.0,))
    assert obs_log_likelihood("gompertz", G, obs) == pytest.approx(-0.7585446705942692,
                                                                   abs=1e-12)


def test_event_contribution():
    obs = IntervalObservation(1.0, 2.0, 1, (0.0,))
    assert obs_log_likelihood("gompertz", G, obs) == pytest.approx(-2.2504005529299867,
                                                                   abs=1e-12)


def test_zero_width_interval_is_floored(backend):
    obs = IntervalObservation(1.0, 1.0 + 1e-300, 1, (0.0,))
    assert obs_log_likelihood("gompertz", G, obs) == LOG_FLOOR
    ds = CompetingRisksDataset((obs,), 2, 1)
    value = dataset_log_likelihood("gompertz", G, ds, backend)
    assert value.loglik == LOG_FLOOR and value.num_degenerate_terms == 1


def test_dataset_total(small_dataset, backend):
    value = dataset_log_likelihood("gompertz", G, small_dataset, backend)
    assert value.loglik == pytest.approx(-3.0089452235242558, abs=1e-12)
    assert value.num_degenerate_terms == 0


def test_censored_at_zero_contributes_nothing(backend):
    ds = CompetingRisksDataset((IntervalObservation(0.0, math.inf, 0, (0.3,)),), 2, 1)
    for fam in ("gompertz", "ig"):
        lp = LinkedParams(fam, G.gammas, G.betas)
        assert dataset_log_likelihood(fam, lp, ds, backend).loglik == 0.0


@pytest.mark.parametrize("family", ["gompertz", "inverse-gaussian"])
def test_matches_mpmath(family, backend):
    rng = np.random.default_rng(21)
    for _ in range(3):
        ds = random_dataset(rng, n=25)
        lp = LinkedParams(family, -rng.uniform(0.1, 1.0, (2, 3)), rng.normal(-0.5, 0.5, (2, 3)))
        got = dataset_log_likelihood(family, lp, ds, backend).loglik
        assert got == pytest.approx(oracles.brute_loglik(family, lp, ds), rel=1e-10)


@pytest.mark.parametrize("family", ["gompertz", "inverse-gaussian"])
def test_kernel_matches_scalar_path(family):
    rng = np.random.default_rng(8)
    ds = random_dataset(rng, n=60)
    lp = LinkedParams(family, rng.normal(-0.3, 0.4, (2, 3)), rng.normal(0, 0.6, (2, 3)))
    scalar = math.fsum(obs_log_likelihood(family, lp, o) for o in ds.observations)
    for backend in ("python", "cython"):
        try:
            value = dataset_log_likelihood(family, lp, ds, backend).loglik
        except ConfigurationError:
            continue
        assert value == pytest.approx(scalar, rel=1e-11)


def test_backends_agree():
    pytest.importorskip("defcure._kernels")
    rng = np.random.default_rng(2)
    ds = random_dataset(rng, n=200)
    thetas = rng.normal(-0.2, 0.7, (30, 12))
    for family in ("gompertz", "ig"):
        vc, dc = LogLikelihood(family, ds, "cython").batch(thetas)
        vp, dp = LogLikelihood(family, ds, "python").batch(thetas)
        np.testing.assert_allclose(vc, vp, rtol=1e-10)
        np.testing.assert_array_equal(dc, dp)


def test_positive_shape_is_finite(backend):
    # a > 0 is not defective but the likelihood must stay finite and non-NaN
    rng = np.random.default_rng(4)
    ds = random_dataset(rng, n=50)
    for family in ("gompertz", "ig"):
        lp = LinkedParams(family, [[2.0, 0, 0], [3.0, 0, 0]], [[1.0, 0, 0], [0.5, 0, 0]])
        value = dataset_log_likelihood(family, lp, ds, backend)
        assert not math.isnan(value.loglik)


def test_permutation_invariance(backend):
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, n=300)
    perm = rng.permutation(ds.n)
    shuffled = ds.subset(perm)
    lp = LinkedParams("ig", [[-0.2, -0.4, -0.6]] * 2, [[-1, 1, 2]] * 2)
    a = dataset_log_likelihood("ig", lp, ds, backend).loglik
    b = dataset_log_likelihood("ig", lp, shuffled, backend).loglik
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_partition_additivity(seed, cut):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=41)
    lp = LinkedParams("gompertz", rng.normal(-0.3, 0.3, (2, 3)), rng.normal(0, 0.5, (2, 3)))
    idx = np.arange(ds.n)
    whole = dataset_log_likelihood("gompertz", lp, ds).loglik
    parts = (dataset_log_likelihood("gompertz", lp, ds.subset(idx[:cut])).loglik
             + dataset_log_likelihood("gompertz", lp, ds.subset(idx[cut:])).loglik)
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_loglik_nonpositive_for_defective(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=20)
    for family in ("gompertz", "ig"):
        lp = LinkedParams(family, -rng.uniform(0.01, 2, (2, 3)), rng.normal(0, 1, (2, 3)))
        assert dataset_log_likelihood(family, lp, ds).loglik <= 0.0


def test_dimension_and_family_checks(small_dataset):
    bad = LinkedParams("gompertz", [[-0.5, 0.0, 0.0]] * 2, [[0.0, 0.0, 0.0]] * 2)
    with pytest.raises(ConfigurationError):
        dataset_log_likelihood("gompertz", bad, small_dataset)
    with pytest.raises(ConfigurationError):
        dataset_log_likelihood("ig", G, small_dataset)
    with pytest.raises(ConfigurationError):
        LogLikelihood("gompertz", small_dataset).batch(np.zeros(3))


def test_likelihood_value_rejects_nan():
    with pytest.raises(ValueError):
        LikelihoodValue(math.nan)
    assert LikelihoodValue(-math.inf).loglik == -math.inf


def test_batch_counts_evaluations(small_dataset):
    ll = LogLikelihood(Family.GOMPERTZ, small_dataset)
    ll.batch(np.tile(G.to_vector(), (4, 1)))
    ll(G.to_vector())
    assert ll.evaluations == 5


@pytest.mark.parametrize("family, a, b, lo, hi", [
    ("inverse-gaussian", -0.5, 2.0, 17.0, 21.0),
    ("inverse-gaussian", -1.2, 0.4, 25.0, 31.0),
    ("inverse-gaussian", -0.05, 3.0, 2.0, 2.5),
    ("inverse-gaussian", 0.8, 1.5, 30.0, 31.0),
    ("inverse-gaussian", -2.0, 0.1, 0.01, 0.5),
    ("gompertz", -0.8, 0.3, 20.0, 24.0),
    ("gompertz", 1.5, 0.2, 3.0, 3.0001),
    ("gompertz", 1e-10, 0.5, 4.0, 6.0),
    ("gompertz", -0.5, 1.0, 2.0, float("inf")),
])
def test_interval_probability_tails_against_mpmath(family, a, b, lo, hi):
    got = float(log_interval_probability(family, a, b, lo, hi))
    assert got == pytest.approx(oracles.log_interval(family, a, b, lo, hi), rel=1e-10)


@pytest.mark.parametrize("a, b, t", [(2.0, 0.3, 20.0), (0.5, 1.0, 40.0), (3.0, 2.0, 5.0)])
def test_ig_upper_tail_survival_against_mpmath(a, b, t):
    expected = oracles.log_survival("inverse-gaussian", a, b, t)
    assert float(ig_log_survival(a, b, t)) == pytest.approx(expected, rel=1e-11)
    assert _ig_log_survival_scalar(a, b, t) == pytest.approx(expected, rel=1e-11)


def test_tail_event_term_backends_agree():
    obs = (IntervalObservation(22.0, 26.0, 1, (0.0,)), IntervalObservation(3.0, 3.5, 1, (1.0,)))
    ds = CompetingRisksDataset(obs, 1, 1)
    theta = np.array([-0.9, 0.2, 0.4, 0.1])
    values = [LogLikelihood("ig", ds, name).value(theta).loglik for name in available_backends()]
    assert np.allclose(values, values[0], rtol=1e-12, atol=0)
    ref = oracles.brute_loglik(Family.INVERSE_GAUSSIAN,
                               LinkedParams.from_vector("ig", theta, 1), ds)
    assert values[0] == pytest.approx(ref, rel=1e-10)
