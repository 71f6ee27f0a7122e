import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcm.errors import ConvergenceError, DomainError
from bcm.ot import (
    PointCloud,
    TransportPlan,
    barycentric_projection,
    entropic_cost,
    entropic_map,
    sinkhorn,
    sinkhorn_scaling,
    squared_cost_matrix,
    w2_sq_entropic,
)

seeds = st.integers(0, 2**32 - 1)


def cloud(rng, n, d, weighted=True):
    w = rng.uniform(0.2, 1.0, n) if weighted else np.ones(n)
    return PointCloud(rng.standard_normal((n, d)), w / w.sum())


def lattice(k):
    ii, jj = np.mgrid[0:k, 0:k]
    return np.column_stack([ii.ravel(), jj.ravel()]).astype(float)


# --- point clouds -----------------------------------------------------------

def test_pointcloud_validation():
    with pytest.raises(DomainError):
        PointCloud([[0.0], [1.0]], [0.7, 0.7])
    with pytest.raises(DomainError):
        PointCloud([[0.0], [1.0]], [1.5, -0.5])
    # zero weights are allowed
    PointCloud([[0.0], [1.0]], [1.0, 0.0])


def test_pointcloud_digest_tracks_content():
    a = PointCloud.uniform([[0.0, 1.0], [2.0, 3.0]])
    b = PointCloud.uniform([[0.0, 1.0], [2.0, 3.0]])
    c = PointCloud.uniform([[0.0, 1.0], [2.0, 3.5]])
    assert a.digest() == b.digest() != c.digest()


# --- cost matrix ----------------------------------------------------------------

def test_cost_pythagorean_and_half():
    a = PointCloud.uniform([[0.0, 0.0]])
    b = PointCloud.uniform([[3.0, 4.0]])
    np.testing.assert_array_equal(squared_cost_matrix(a, b), [[25.0]])
    np.testing.assert_array_equal(squared_cost_matrix(a, b, half=True), [[12.5]])


def test_cost_zero_diagonal(rng):
    a = cloud(rng, 7, 3)
    assert np.all(np.diag(squared_cost_matrix(a, a)) == 0.0)


def test_cost_matches_double_loop(rng):
    a, b = cloud(rng, 9, 4), cloud(rng, 6, 4)
    M = squared_cost_matrix(a, b)
    naive = np.empty((9, 6))
    for i in range(9):
        for j in range(6):
            naive[i, j] = sum((a.points[i, k] - b.points[j, k]) ** 2 for k in range(4))
    np.testing.assert_allclose(M, naive, rtol=1e-12, atol=1e-12)


def test_cost_dimension_mismatch(rng):
    with pytest.raises(DomainError):
        squared_cost_matrix(cloud(rng, 3, 2), cloud(rng, 3, 3))


# --- sinkhorn ---------------------------------------------------------------------

def test_single_pair_equal_split():
    a = PointCloud.uniform([[0.0, 0.0]])
    b = PointCloud.uniform([[3.0, 4.0]])
    pot, plan = sinkhorn(a, b, 0.7)
    assert pot.f[0] + pot.g[0] == pytest.approx(25.0, abs=1e-12)
    assert pot.f[0] == pytest.approx(12.5, abs=1e-12)
    assert pot.g[0] == pytest.approx(12.5, abs=1e-12)
    np.testing.assert_allclose(plan.matrix, [[1.0]], atol=1e-14)


def test_symmetric_two_point_problem():
    a = PointCloud.uniform([[-1.0], [1.0]])
    pot, plan = sinkhorn(a, a, 1.0, tol=1e-12)
    P = plan.matrix
    np.testing.assert_allclose(P, P.T, atol=1e-14)
    np.testing.assert_allclose(P.sum(axis=0), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(P.sum(axis=1), [0.5, 0.5], atol=1e-12)
    assert P[0, 0] == pytest.approx(P[1, 1], abs=1e-14)
    assert pot.f[0] == pytest.approx(pot.f[1], abs=1e-12)
    assert pot.g[0] == pytest.approx(pot.g[1], abs=1e-12)


def naive_scaling_plan(a, b, eps, iters):
    """Textbook alternating scaling, written out without the library."""
    n, m = a.n, b.n
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            K[i, j] = np.exp(-np.sum((a.points[i] - b.points[j]) ** 2) / eps)
    u, v = np.ones(n), np.ones(m)
    for _ in range(iters):
        u = a.weights / (K @ v)
        v = b.weights / (K.T @ u)
    return u[:, None] * K * v[None, :]


def test_matches_long_run_scaling_oracle():
    rng = np.random.default_rng(3)
    a = PointCloud.uniform(rng.uniform(size=(3, 2)))
    b = PointCloud.uniform(rng.uniform(size=(3, 2)))
    _, plan = sinkhorn(a, b, 0.5, tol=1e-14)
    np.testing.assert_allclose(plan.matrix, naive_scaling_plan(a, b, 0.5, 10_000), atol=1e-8)


def test_scaling_path_agrees_at_large_epsilon(rng):
    a, b = cloud(rng, 10, 2), cloud(rng, 12, 2)
    _, plan = sinkhorn(a, b, 5.0, tol=1e-12)
    np.testing.assert_allclose(sinkhorn_scaling(a, b, 5.0, tol=1e-12).matrix, plan.matrix, atol=1e-10)


def test_scaling_path_reports_underflow():
    a = PointCloud.uniform([[0.0]])
    b = PointCloud.uniform([[100.0]])
    with pytest.raises(DomainError, match="log-domain"):
        sinkhorn_scaling(a, b, 0.01)
    # the stabilized solver handles the same problem
    _, plan = sinkhorn(a, b, 0.01)
    np.testing.assert_allclose(plan.matrix, [[1.0]])


def test_small_epsilon_large_cost(rng):
    # costs up to ~1200 at epsilon 0.5: the plain Gibbs kernel underflows off a narrow band
    X = 5.0 * lattice(6)
    a = PointCloud.from_masses(X, rng.uniform(0.1, 1.0, 36))
    b = PointCloud.from_masses(X + [1.0, -0.5], rng.uniform(0.1, 1.0, 36))
    _, plan = sinkhorn(a, b, 0.5)
    assert np.all(np.isfinite(plan.matrix))
    assert plan.row_residual < 1e-6 and plan.col_residual < 1e-6


def test_iteration_limit_error_carries_residual(rng):
    a, b = cloud(rng, 20, 2), cloud(rng, 20, 2)
    with pytest.raises(ConvergenceError) as info:
        sinkhorn(a, b, 0.01, max_iters=2)
    assert info.value.residual > 1e-7
    pot, plan = info.value.best
    assert plan.matrix.shape == (20, 20) and not plan.converged


def test_rejects_nonpositive_epsilon(rng):
    with pytest.raises(DomainError):
        sinkhorn(cloud(rng, 3, 1), cloud(rng, 3, 1), 0.0)


def test_zero_weight_points_carry_no_mass():
    a = PointCloud([[0.0], [1.0], [5.0]], [0.5, 0.5, 0.0])
    b = PointCloud([[0.5], [2.0]], [0.0, 1.0])
    pot, plan = sinkhorn(a, b, 0.3)
    assert np.all(plan.matrix[2] == 0.0) and np.all(plan.matrix[:, 0] == 0.0)
    assert np.all(np.isfinite(pot.f)) and np.all(np.isfinite(pot.g))
    assert plan.row_residual < 1e-6 and plan.col_residual < 1e-6


@given(seeds, st.integers(1, 40), st.integers(1, 40), st.integers(1, 5), st.sampled_from([0.1, 1.0, 10.0]))
def test_marginal_feasibility(seed, n, m, d, eps):
    rng = np.random.default_rng(seed)
    a, b = cloud(rng, n, d), cloud(rng, m, d)
    _, plan = sinkhorn(a, b, eps, max_iters=50_000)
    assert plan.row_residual < 1e-6
    assert plan.col_residual < 1e-6
    assert np.all(plan.matrix > 0)


@given(seeds, st.booleans())
def test_normalization_identities(seed, half):
    rng = np.random.default_rng(seed)
    a, b = cloud(rng, 15, 2), cloud(rng, 11, 2)
    eps = 0.5
    pot, _ = sinkhorn(a, b, eps, tol=1e-11, half=half, max_iters=200_000)
    M = squared_cost_matrix(a, b, half)
    E = np.exp((pot.f[:, None] + pot.g[None, :] - M) / eps)
    np.testing.assert_allclose(E @ b.weights, 1.0, atol=1e-6)
    np.testing.assert_allclose(a.weights @ E, 1.0, atol=1e-6)
    # the remaining constant is split evenly
    assert a.weights @ pot.f == pytest.approx(b.weights @ pot.g, abs=1e-9)


@given(seeds)
def test_dual_objective_increases_with_iterations(seed):
    # Sinkhorn is block coordinate ascent on the dual; the plan cost of the
    # half-feasible iterates carries no such guarantee (it typically rises)
    rng = np.random.default_rng(seed)
    a, b = cloud(rng, 12, 2), cloud(rng, 14, 2)
    eps = 0.2
    M = squared_cost_matrix(a, b)
    values = []
    for k in range(0, 40):
        pot, _ = sinkhorn(a, b, eps, max_iters=k, tol=0.0, raise_on_failure=False)
        E = np.exp((pot.f[:, None] + pot.g[None, :] - M) / eps)
        values.append(a.weights @ pot.f + b.weights @ pot.g - eps * (a.weights @ E @ b.weights))
    assert np.all(np.diff(values) >= -1e-10)


# --- entropic map ------------------------------------------------------------------

def test_map_single_target():
    a = PointCloud.uniform([[0.0, 0.0], [1.0, 1.0]])
    b = PointCloud.uniform([[2.0, -1.0]])
    pot, _ = sinkhorn(a, b, 1.0, half=True)
    np.testing.assert_allclose(entropic_map([[5.0, 5.0], [-3.0, 0.0]], pot, b), [[2.0, -1.0]] * 2)


def test_map_symmetric_midpoint():
    a = PointCloud.uniform([[-1.0], [1.0]])
    pot, _ = sinkhorn(a, a, 1.0, tol=1e-12, half=True)
    assert entropic_map([0.0], pot, a)[0] == pytest.approx(0.0, abs=1e-12)


def test_map_matches_formula(rng):
    a = PointCloud.uniform(rng.standard_normal((8, 2)))
    b = cloud(rng, 5, 2)
    eps = 0.4
    pot, _ = sinkhorn(a, b, eps, tol=1e-10, half=True)
    x = np.array([0.3, -1.7])
    num, den = np.zeros(2), 0.0
    for k in range(5):
        y = b.points[k]
        wk = b.weights[k] * np.exp((pot.g[k] - 0.5 * np.dot(x - y, x - y)) / eps)
        num += wk * y
        den += wk
    np.testing.assert_allclose(entropic_map(x, pot, b), num / den, rtol=1e-10, atol=1e-10)


@given(seeds)
def test_map_in_convex_hull_of_targets(seed):
    rng = np.random.default_rng(seed)
    a, b = cloud(rng, 6, 1), cloud(rng, 7, 1)
    pot, _ = sinkhorn(a, b, 0.3, half=True)
    T = entropic_map(rng.normal(scale=5, size=(20, 1)), pot, b)
    assert np.all(T >= b.points.min() - 1e-12) and np.all(T <= b.points.max() + 1e-12)


@given(seeds, st.booleans())
def test_map_translation_equivariance(seed, half):
    rng = np.random.default_rng(seed)
    a, b = cloud(rng, 10, 3), cloud(rng, 9, 3)
    t = rng.normal(scale=3, size=3)
    x = rng.standard_normal((4, 3))
    pot, _ = sinkhorn(a, b, 0.5, tol=1e-10, half=half, max_iters=200_000)
    pot_t, _ = sinkhorn(a.translate(t), b.translate(t), 0.5, tol=1e-10, half=half, max_iters=200_000)
    np.testing.assert_allclose(entropic_map(x + t, pot_t, b.translate(t)) - t, entropic_map(x, pot, b), atol=1e-8)


def test_map_rejects_foreign_potentials(rng):
    a, b = cloud(rng, 4, 2), cloud(rng, 5, 2)
    pot, _ = sinkhorn(a, b, 1.0)
    with pytest.raises(DomainError):
        entropic_map([0.0, 0.0], pot, a)


# --- barycentric projection -------------------------------------------------------

def test_projection_of_diagonal_plan(rng):
    Y = PointCloud.uniform(rng.standard_normal((5, 2)))
    plan = TransportPlan(np.eye(5) / 5, Y.weights, Y.weights)
    np.testing.assert_allclose(barycentric_projection(plan, Y.weights, Y), Y.points, atol=1e-15)


def test_projection_of_independent_plan(rng):
    a, b = cloud(rng, 4, 2), cloud(rng, 6, 2)
    plan = TransportPlan(np.outer(a.weights, b.weights), a.weights, b.weights)
    T = barycentric_projection(plan, a.weights, b)
    np.testing.assert_allclose(T, np.tile(b.mean(), (4, 1)), atol=1e-14)


def test_projection_matches_naive_loops(rng):
    a, b = cloud(rng, 6, 3), cloud(rng, 5, 3)
    _, plan = sinkhorn(a, b, 0.8)
    T = barycentric_projection(plan, a.weights, b)
    for j in range(6):
        row = np.zeros(3)
        for k in range(5):
            row += plan.matrix[j, k] * b.points[k]
        np.testing.assert_allclose(T[j], row / a.weights[j], rtol=1e-12, atol=1e-12)


def test_projection_rejects_mass_on_zero_weight_row():
    Y = PointCloud.uniform([[0.0], [1.0]])
    plan = TransportPlan(np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([1.0, 0.0]), Y.weights)
    with pytest.raises(DomainError):
        barycentric_projection(plan, [1.0, 0.0], Y)


def test_projection_approaches_identity_as_epsilon_shrinks():
    X = PointCloud.uniform(np.linspace(0.0, 4.0, 9)[:, None])
    errs = []
    for eps in (1.0, 0.1, 0.01):
        _, plan = sinkhorn(X, X, eps, max_iters=100_000)
        errs.append(np.abs(barycentric_projection(plan, X.weights, X) - X.points).max())
    assert errs[0] > errs[1] > errs[2]


# --- entropic cost ------------------------------------------------------------------

def test_cost_single_pair():
    a, b = PointCloud.uniform([[1.0, 2.0]]), PointCloud.uniform([[4.0, 6.0]])
    _, plan = sinkhorn(a, b, 1.0)
    assert entropic_cost(plan, squared_cost_matrix(a, b)) == pytest.approx(25.0, abs=1e-12)


def test_cost_identical_clouds_is_small():
    n = 10
    X = PointCloud.uniform(np.arange(n, dtype=float)[:, None])
    eps = 0.05
    _, plan = sinkhorn(X, X, eps)
    cost = entropic_cost(plan, squared_cost_matrix(X, X))
    assert 0 <= cost < eps * np.log(n)


def test_cost_tends_to_sorted_matching(rng):
    x, y = rng.standard_normal(12), rng.standard_normal(12) + 0.5
    exact = np.mean((np.sort(x) - np.sort(y)) ** 2)
    a, b = PointCloud.uniform(x[:, None]), PointCloud.uniform(y[:, None])
    M = squared_cost_matrix(a, b)
    gaps = []
    for eps in (1.0, 0.1, 0.01):
        _, plan = sinkhorn(a, b, eps, tol=1e-6, max_iters=500_000)
        gaps.append(abs(entropic_cost(plan, M) - exact))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02 * exact


def test_cost_shape_mismatch():
    with pytest.raises(DomainError):
        entropic_cost(np.ones((2, 2)) / 4, np.ones((2, 3)))


def test_annealed_w2_matches_direct_solve(rng):
    a = PointCloud.from_masses(lattice(6), rng.uniform(0.1, 1.0, 36))
    b = PointCloud.from_masses(lattice(6) + [1.0, 0.0], rng.uniform(0.1, 1.0, 36))
    _, plan = sinkhorn(a, b, 0.1, tol=1e-9, max_iters=100_000)
    direct = entropic_cost(plan, squared_cost_matrix(a, b))
    assert w2_sq_entropic(a, b, 0.1, tol=1e-9) == pytest.approx(direct, rel=1e-7)
