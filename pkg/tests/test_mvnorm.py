import numpy as np
import pytest
from scipy.stats import multivariate_normal

from tailchain.mvnorm import GenzTailCache, mvn_cdf, mvn_logcdf
from tailchain.utils import ParameterError


def _random_corr(rng, d):
    a = rng.standard_normal((d, d))
    c = a @ a.T + d * np.eye(d)
    s = np.sqrt(np.diag(c))
    return c / np.outer(s, s)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_against_scipy(rng, d):
    cov = _random_corr(rng, d)
    b = rng.standard_normal((6, d)) * 1.3
    p, err = mvn_cdf(b, cov, points=4096, shifts=8, target_error=1e-6)
    ref = np.array([multivariate_normal.cdf(row, mean=np.zeros(d), cov=cov,
                                            abseps=1e-10, maxpts=2_000_000 * d)
                    for row in b])
    assert np.max(np.abs(p - ref)) < 5e-6
    # reported error estimates should roughly bound the actual error
    assert np.all(np.abs(p - ref) < np.maximum(5 * err, 5e-6))


def test_marginalizes_infinite_limits(rng):
    cov = _random_corr(rng, 4)
    b = np.array([0.3, np.inf, -0.2, np.inf])
    p, _ = mvn_cdf(b, cov, points=4096, shifts=8)
    ref = multivariate_normal.cdf(b[[0, 2]], mean=np.zeros(2),
                                  cov=cov[np.ix_([0, 2], [0, 2])],
                                  abseps=1e-10, maxpts=1_000_000)
    assert p == pytest.approx(ref, abs=5e-6)
    p_all, _ = mvn_cdf(np.full(4, np.inf), cov)
    assert p_all == pytest.approx(1.0)


def test_log_scale_deep_tail(rng):
    cov = _random_corr(rng, 3)
    b = np.array([-8.0, -7.0, -9.0])
    logp, _ = mvn_logcdf(b, cov, points=8192, shifts=8)
    assert -200 < logp < np.log(1e-10)  # far below absolute resolution, still finite


def test_deterministic_given_seed(rng):
    cov = _random_corr(rng, 4)
    b = rng.standard_normal((3, 4))
    p1, _ = mvn_logcdf(b, cov, points=512, shifts=4, seed=7)
    p2, _ = mvn_logcdf(b, cov, points=512, shifts=4, seed=7)
    assert np.array_equal(p1, p2)


def test_tail_cache_matches_full_evaluation(rng):
    d = 4
    cov = _random_corr(rng, d)
    v_head = rng.standard_normal((9, d - 1))
    v_last = rng.standard_normal(9)
    cache = GenzTailCache(cov, v_head, points=4096, seed=3)
    got = np.exp(cache.logcdf(v_last))
    want, _ = mvn_cdf(np.concatenate([v_head, v_last[:, None]], axis=1), cov,
                      points=8192, shifts=8)
    assert np.max(np.abs(got - want)) < 2e-4
    rows = np.array([1, 4, 7])
    sub = np.exp(cache.logcdf(v_last[rows], rows=rows))
    assert np.allclose(sub, got[rows], atol=1e-12)


def test_rejects_bad_covariance():
    with pytest.raises(ParameterError):
        mvn_cdf(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
