import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcm.errors import DomainError
from bcm.estimate import (
    estimate_coords_1d,
    estimate_coords_pointcloud,
    estimate_coords_samples,
)
from bcm.gaussian import gaussian_barycenter, gram_gaussian
from bcm.ot import PointCloud
from bcm.synthesis import quantile_barycenter_1d

seeds = st.integers(0, 2**32 - 1)


def clouds(rng, p, n=40, d=2):
    return [PointCloud.uniform(rng.normal(rng.normal(size=d), rng.uniform(0.5, 1.5), (n, d))) for _ in range(p)]


def test_query_equal_to_a_reference(rng):
    refs = clouds(rng, 3)
    est = estimate_coords_pointcloud(refs[0], refs, 0.05, max_iters=100_000)
    assert abs(est.lam[0] - 1.0) < 0.05


def test_single_reference(rng):
    refs = clouds(rng, 1)
    est = estimate_coords_pointcloud(clouds(rng, 1)[0], refs, 1.0)
    np.testing.assert_array_equal(est.lam, [1.0])


def test_needs_references(rng):
    with pytest.raises(DomainError):
        estimate_coords_pointcloud(clouds(rng, 1)[0], [], 1.0)


def test_exact_1d_recovers_planted_coordinates(rng):
    refs = [rng.normal(m, s, 200) for m, s in ((0.0, 1.0), (2.0, 0.5), (-1.0, 2.0))]
    lam = np.array([0.2, 0.3, 0.5])
    est = estimate_coords_1d(quantile_barycenter_1d(lam, refs), refs)
    assert np.abs(est.lam - lam).max() < 1e-4
    assert est.value < 1e-20


def test_pointcloud_path_on_planted_1d_barycenter(rng):
    refs = [rng.normal(m, s, 60) for m, s in ((0.0, 1.0), (3.0, 0.5))]
    lam = np.array([0.35, 0.65])
    query = PointCloud.uniform(quantile_barycenter_1d(lam, refs)[:, None])
    est = estimate_coords_pointcloud(query, [PointCloud.uniform(r[:, None]) for r in refs], 0.01, max_iters=100_000)
    assert np.abs(est.lam - lam).max() < 0.02


def test_threads_give_identical_results(rng):
    refs = clouds(rng, 4)
    query = clouds(rng, 1)[0]
    a = estimate_coords_pointcloud(query, refs, 0.5)
    b = estimate_coords_pointcloud(query, refs, 0.5, threads=4)
    np.testing.assert_array_equal(a.gram, b.gram)
    np.testing.assert_array_equal(a.lam, b.lam)


@settings(max_examples=10)
@given(seeds)
def test_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    refs = clouds(rng, 3, n=25)
    query = clouds(rng, 1, n=25)[0]
    t = rng.normal(scale=4, size=2)
    a = estimate_coords_pointcloud(query, refs, 0.5, tol=1e-10, max_iters=200_000)
    b = estimate_coords_pointcloud(query.translate(t), [r.translate(t) for r in refs], 0.5, tol=1e-10, max_iters=200_000)
    np.testing.assert_allclose(b.gram, a.gram, atol=1e-7)
    np.testing.assert_allclose(b.lam, a.lam, atol=1e-6)


def test_samples_path_approaches_closed_form():
    rng = np.random.default_rng(4)
    refs = [np.diag([0.5, 2.0]), np.diag([2.0, 0.5]), np.array([[1.0, 0.4], [0.4, 1.0]])]
    lam = np.array([0.5, 0.3, 0.2])
    S0 = gaussian_barycenter(lam, refs).cov
    n = 1000
    X = rng.multivariate_normal(np.zeros(2), S0, 2 * n)
    Ys = [rng.multivariate_normal(np.zeros(2), S, n) for S in refs]
    est = estimate_coords_samples(X, Ys, 0.1)
    A = gram_gaussian(S0, refs)
    assert np.abs(est.gram - A).max() < 0.2
    assert np.abs(est.lam - lam).max() < 0.25


def test_samples_path_needs_two_samples():
    with pytest.raises(DomainError):
        estimate_coords_samples(np.zeros((1, 2)), [np.zeros((3, 2))], 1.0)
