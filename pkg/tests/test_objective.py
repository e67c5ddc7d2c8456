"""Information-gain objective: log-det identities, sampling, MAP, metrics."""

import numpy as np
import pytest

from expnet.objective import (InfoMatrix, ObjectiveError, SampleBatch,
                              estimation_error, g_value, map_estimate,
                              marginal_gain, sample_batch, sample_labels,
                              utility_mc, whitening_vector)

from conftest import chain_instance, diamond_instance


def _random_batch(rng, d, n_rows):
    counts = {0: n_rows}
    features = {0: rng.standard_normal((n_rows, d))}
    return SampleBatch(counts=counts, features=features)


def test_g_value_empty_is_zero():
    batch = SampleBatch(counts={}, features={})
    assert g_value(np.array([1.0, 2.0]), batch, {}) == 0.0


def test_g_value_single_row_closed_form():
    # one whitened row z: log det(I + z z^T) = log(1 + |z|^2)
    prior = np.array([2.0, 0.5])
    x = np.array([[1.0, 3.0]])
    sigma = 1.5
    batch = SampleBatch(counts={0: 1}, features={0: x})
    z = np.sqrt(prior) * x[0] / sigma
    expected = np.log1p(z @ z)
    assert g_value(prior, batch, {0: sigma}) == pytest.approx(expected, rel=1e-12)


def test_g_value_zero_prior_direction_ignored():
    # zero prior variance in a coordinate means no information is gained there
    prior = np.array([0.0, 1.0])
    batch = SampleBatch(counts={0: 1}, features={0: np.array([[5.0, 0.0]])})
    assert g_value(prior, batch, {0: 1.0}) == pytest.approx(0.0, abs=1e-12)


def test_marginal_gain_telescopes_to_dense():
    rng = np.random.default_rng(0)
    d = 8
    prior = rng.uniform(0.2, 2.0, d)
    info = InfoMatrix.empty(prior)
    total = 0.0
    dense = np.eye(d)
    for _ in range(30):
        x = rng.standard_normal(d)
        sigma = rng.uniform(0.6, 1.4)
        gain, info = marginal_gain(info, x, sigma)
        assert gain >= 0.0
        total += gain
        z = np.sqrt(prior) * x / sigma
        dense += np.outer(z, z)
    logdet = np.linalg.slogdet(dense)[1]
    assert total == pytest.approx(logdet, rel=1e-12)
    assert info.log_det == pytest.approx(logdet, rel=1e-12)


def test_marginal_gain_zero_row_is_noop():
    info = InfoMatrix.empty(np.array([1.0, 1.0]))
    gain, info2 = marginal_gain(info, np.zeros(2), 1.0)
    assert gain == 0.0 and info2 is info


def test_whitening_vector(chain):
    w = whitening_vector(chain, 0, 1)
    assert w == pytest.approx(np.array([1.0]))  # prior 1, feat 1, sigma 1


def test_sample_batch_deterministic(diamond):
    from expnet import stream
    lam_l = {0: 2.0, 1: 3.0}
    a = sample_batch(diamond.config, lam_l, stream(1, "x"))
    b = sample_batch(diamond.config, lam_l, stream(1, "x"))
    assert a.counts == b.counts
    assert all(np.array_equal(a.features[s], b.features[s]) for s in a.counts)
    assert all(a.features[s].shape == (a.counts[s], 3) for s in a.counts)


def test_sample_labels_model(diamond):
    from expnet import stream
    lam_l = {0: 4.0, 1: 0.0}
    batch = sample_batch(diamond.config, lam_l, stream(2, "x"))
    beta = np.arange(3.0)
    labeled = sample_labels(diamond.config, batch, beta,
                            {s: 1e-12 for s in batch.counts}, stream(2, "y"))
    for s, n in labeled.counts.items():
        if n:
            assert labeled.labels[s] == pytest.approx(labeled.features[s] @ beta,
                                                      abs=1e-9)
    assert batch.labels is None  # original untouched


def test_map_estimate_matches_normal_equations():
    rng = np.random.default_rng(5)
    d, n = 4, 12
    prior_mean = rng.standard_normal(d)
    prior_cov = rng.uniform(0.5, 2.0, d)
    x = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    sigma = 0.7
    batch = SampleBatch(counts={0: n}, features={0: x}, labels={0: y})
    est = map_estimate(prior_mean, prior_cov, batch, {0: sigma})
    a = x.T @ x / sigma ** 2 + np.diag(1.0 / prior_cov)
    b = x.T @ y / sigma ** 2 + prior_mean / prior_cov
    assert est == pytest.approx(np.linalg.solve(a, b), rel=1e-9)


def test_map_estimate_no_data_returns_prior_mean():
    batch = SampleBatch(counts={0: 0}, features={0: np.zeros((0, 3))},
                        labels={0: np.zeros(0)})
    mean = np.array([1.0, -2.0, 0.5])
    est = map_estimate(mean, np.ones(3), batch, {0: 1.0})
    assert est == pytest.approx(mean)


def test_map_estimate_requires_labels():
    batch = SampleBatch(counts={0: 1}, features={0: np.ones((1, 2))})
    with pytest.raises(ObjectiveError):
        map_estimate(np.zeros(2), np.ones(2), batch, {0: 1.0})


# ---------------------------------------------------------------------------
# utility estimator
# ---------------------------------------------------------------------------


def test_utility_zero_rates_is_zero(diamond):
    est = utility_mc(diamond, diamond.zero_rates(), N1=8, N2=8, rng=0)
    assert est.value == 0.0
    assert est.stderr == 0.0


def test_utility_deterministic_and_seed_sensitive(diamond):
    lam = np.array([1.0, 0.5, 2.0, 0.25])
    a = utility_mc(diamond, lam, N1=16, N2=16, rng=3)
    b = utility_mc(diamond, lam, N1=16, N2=16, rng=3)
    c = utility_mc(diamond, lam, N1=16, N2=16, rng=4)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value != c.value


def test_utility_monotone_coupling(diamond):
    lam = np.array([0.8, 1.2, 0.5, 1.0])
    lo = utility_mc(diamond, lam, N1=24, N2=24, rng=7)
    hi = utility_mc(diamond, lam + 0.5, N1=24, N2=24, rng=7)
    assert hi.value >= lo.value  # exact per-draw coupling, not just statistical


def test_utility_single_rep_zero_stderr(diamond):
    est = utility_mc(diamond, np.full(4, 1.0), N1=1, N2=8, rng=0)
    assert est.stderr == 0.0


def test_utility_matches_analytic_one_dim():
    from scipy import stats
    from expnet.gradient import _chi2_log_moment
    inst = chain_instance(rate=5.0)
    lam_T = 2.0
    pmf = stats.poisson.pmf(np.arange(81), lam_T)
    analytic = float(pmf @ [_chi2_log_moment(n, 1.0, 96) for n in range(81)])
    est = utility_mc(inst, np.array([lam_T]), N1=300, N2=300, rng=17)
    assert abs(est.value - analytic) <= 4 * est.stderr


def test_estimation_error_decreases_with_rate():
    inst = diamond_instance(seed=2)
    low = estimation_error(inst, np.full(4, 0.1), reps_data=60,
                           reps_model=6, rng=5)
    high = estimation_error(inst, np.full(4, 3.0), reps_data=60,
                            reps_model=6, rng=5)
    assert 0 <= high < low


def test_estimation_error_deterministic(diamond):
    lam = np.full(4, 1.0)
    a = estimation_error(diamond, lam, reps_data=20, reps_model=4, rng=1)
    b = estimation_error(diamond, lam, reps_data=20, reps_model=4, rng=1)
    assert a == b


def test_estimation_error_rejects_all_zero_models():
    # zero prior mean + zero prior variance => ground truth is always 0,
    # relative error undefined for every draw
    inst = chain_instance(prior_var=0.0)
    with pytest.raises(ObjectiveError):
        estimation_error(inst, np.array([1.0]), reps_data=8, reps_model=2,
                         rng=0)
