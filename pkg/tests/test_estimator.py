import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twostage.estimator import estimate_count, estimation_error, round_count, sample_covariance
from twostage.oracles import naive_sample_covariance
from twostage.system_model import (SystemConfig, complex_gaussian, generate_common_preamble,
                                   generate_phase1_signal, sample_activity, trial_rng)


def test_sample_covariance_basics():
    assert np.all(sample_covariance(np.zeros((3, 5))) == 0)
    y = complex_gaussian(trial_rng(0), (4, 1))
    np.testing.assert_allclose(sample_covariance(y), y @ y.conj().T)


def test_sample_covariance_matches_loop():
    y = complex_gaussian(trial_rng(1), (4, 8))
    np.testing.assert_allclose(sample_covariance(y), naive_sample_covariance(y), atol=1e-15)
    c = sample_covariance(y)
    np.testing.assert_allclose(c, c.conj().T)
    assert np.linalg.eigvalsh(c).min() > -1e-12


def test_sample_covariance_rejects_empty():
    with pytest.raises(ValueError):
        sample_covariance(np.zeros((0, 3)))


def test_population_covariance_gives_exact_count():
    s = complex_gaussian(trial_rng(2), 4)
    sigma2 = 0.8
    est = estimate_count(7 * np.outer(s, s.conj()) + sigma2 * np.eye(4), s, sigma2, 1000)
    assert est.k_hat_raw == pytest.approx(7.0, rel=1e-12)
    assert est.k_hat == 7

    est = estimate_count(sigma2 * np.eye(4), s, sigma2, 1000)
    assert est.k_hat_raw == pytest.approx(0.0, abs=1e-12)
    assert est.k_hat == 0


@settings(max_examples=60)
@given(st.integers(0, 1000), st.integers(1, 16), st.floats(1e-3, 10.0), st.integers(0, 2**32 - 1),
       st.complex_numbers(min_magnitude=0.1, max_magnitude=10.0))
def test_exactness_and_scale_invariance(k, l1, sigma2, seed, c):
    s = complex_gaussian(trial_rng(seed), l1)
    pop = k * np.outer(s, s.conj()) + sigma2 * np.eye(l1)
    raw = estimate_count(pop, s, sigma2, 1000).k_hat_raw
    assert raw == pytest.approx(k, rel=1e-10, abs=1e-9)
    cs = c * s
    scaled = k * np.outer(cs, cs.conj()) + sigma2 * np.eye(l1)
    assert estimate_count(scaled, cs, sigma2, 1000).k_hat_raw == pytest.approx(raw, rel=1e-9, abs=1e-8)


def test_zero_preamble_rejected():
    with pytest.raises(ValueError):
        estimate_count(np.eye(3), np.zeros(3), 1.0, 10)


@pytest.mark.parametrize("raw, n, expected", [
    (-3.2, 10, 0), (0.49, 10, 0), (0.5, 10, 1), (6.5, 10, 7), (7.49, 10, 7), (12.0, 10, 10),
])
def test_rounding_rule(raw, n, expected):
    assert round_count(raw, n) == expected


@pytest.mark.parametrize("k, k_hat, expected", [(100, 100, 0.0), (100, 90, 0.1), (200, 250, 0.25)])
def test_estimation_error(k, k_hat, expected):
    assert estimation_error(k, k_hat) == pytest.approx(expected)


def test_estimation_error_undefined_at_zero():
    with pytest.raises(ValueError):
        estimation_error(0, 1.0)


def _raw_estimates(k, m, trials, seed, n=200, l1=4, sigma2=1.0):
    cfg = SystemConfig(n, m, k, l_phase1=l1, sigma2=sigma2)
    s = generate_common_preamble(l1, trial_rng(seed, 0))
    act = sample_activity(n, k, trial_rng(seed, 1))
    rng = trial_rng(seed, 2)
    out = []
    for _ in range(trials):
        y = generate_phase1_signal(cfg, act, s, rng)
        out.append(estimate_count(sample_covariance(y), s, sigma2, n).k_hat_raw)
    return np.array(out)


def test_estimator_unbiased():
    est = _raw_estimates(k=30, m=8, trials=10_000, seed=5)
    assert abs(est.mean() - 30) < 3 * est.std(ddof=1) / np.sqrt(est.size)


def test_estimator_concentrates_with_antennas():
    variances = [_raw_estimates(k=30, m=m, trials=2000, seed=6).var() for m in (8, 32, 128)]
    assert variances[0] > variances[1] > variances[2]
