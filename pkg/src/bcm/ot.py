"""Entropic optimal transport between discrete measures.

The dual potentials ``(f, g)`` follow the convention where the optimal plan
is ``pi_jk = p_j q_k exp((f_j + g_k - M_jk) / eps)``.  At optimality this
gives, for every source ``j`` and target ``k``::

    sum_k q_k exp((f_j + g_k - M_jk) / eps) = 1
    sum_j p_j exp((f_j + g_k - M_jk) / eps) = 1

which is the normalization the entropic map needs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, softmax

from .errors import ConvergenceError, DomainError

WEIGHT_TOL = 1e-12
# scaling vectors are folded back into the potentials past this log-magnitude
_ABSORB_HI = np.exp(30.0)
_ABSORB_LO = np.exp(-30.0)
_TINY = 1e-290


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted finite support of a probability measure in R^d."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.array(self.points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        w = np.array(self.weights, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] == 0:
            raise DomainError(f"points must be a non-empty (n, d) array, got {X.shape}")
        if w.shape[0] != X.shape[0]:
            raise DomainError(f"{w.shape[0]} weights for {X.shape[0]} points")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(w))):
            raise DomainError("non-finite points or weights")
        if np.any(w < 0):
            raise DomainError("negative weights")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights sum to {w.sum():.17g}, not 1")
        X.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "PointCloud":
        X = np.asarray(points, dtype=float)
        n = X.shape[0]
        return cls(X, np.full(n, 1.0 / n))

    @classmethod
    def from_masses(cls, points, masses) -> "PointCloud":
        """Normalize nonnegative masses into weights."""
        m = np.asarray(masses, dtype=float)
        total = m.sum()
        if not total > 0:
            raise DomainError("total mass must be positive")
        return cls(points, m / total)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def translate(self, t) -> "PointCloud":
        return PointCloud(self.points + np.asarray(t, dtype=float), self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def digest(self) -> str:
        """Content hash of points and weights, computed once per instance."""
        cached = self.__dict__.get("_digest")
        if cached is not None:
            return cached
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.weights).tobytes())
        h.update(str(self.points.shape).encode())
        self.__dict__["_digest"] = h.hexdigest()
        return self.__dict__["_digest"]


@dataclass(frozen=True, eq=False)
class DualPotentials:
    f: np.ndarray
    g: np.ndarray
    epsilon: float
    half_cost: bool = False


@dataclass(frozen=True, eq=False)
class TransportPlan:
    matrix: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def row_residual(self) -> float:
        return float(np.abs(self.matrix.sum(axis=1) - self.source_weights).sum())

    @property
    def col_residual(self) -> float:
        return float(np.abs(self.matrix.sum(axis=0) - self.target_weights).sum())


def _check_dims(a: PointCloud, b: PointCloud):
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch: {a.dim} vs {b.dim}")


def squared_cost_matrix(a: PointCloud, b: PointCloud, half: bool = False) -> np.ndarray:
    """Pairwise squared Euclidean distances, optionally halved."""
    _check_dims(a, b)
    M = cdist(a.points, b.points, "sqeuclidean")
    return 0.5 * M if half else M


def _log(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _f_transform(g, logq, M, eps):
    return -eps * logsumexp(logq[None, :] + (g[None, :] - M) / eps, axis=1)


def _g_transform(f, logp, M, eps):
    return -eps * logsumexp(logp[:, None] + (f[:, None] - M) / eps, axis=0)


def sinkhorn(
    a: PointCloud,
    b: PointCloud,
    epsilon: float,
    max_iters: int = 10_000,
    tol: float = 1e-7,
    half: bool = False,
    init: DualPotentials | None = None,
    raise_on_failure: bool = True,
):
    """Solve entropic OT between ``a`` and ``b`` with log-domain stabilization.

    Iterates the Sinkhorn scaling updates on a kernel that already absorbs
    the current potentials, and folds the scalings back into the potentials
    whenever they drift in magnitude, so no exponential ever under- or
    overflows.  Converged when the larger of the two marginal l1 residuals
    drops below ``tol``.

    Parameters
    ----------
    a, b : PointCloud
        Source and target measures.  Zero-weight points take no part in the
        solve; their potentials are filled in by the soft c-transform.
    epsilon : float
        Entropic regularization, in the units of the cost.
    half : bool
        Use the cost ``|x - y|^2 / 2`` instead of ``|x - y|^2``.
    init : DualPotentials, optional
        Warm start (e.g. from a larger epsilon).

    Returns
    -------
    potentials : DualPotentials
    plan : TransportPlan

    Raises
    ------
    ConvergenceError
        After ``max_iters`` iterations without meeting ``tol``; carries the
        last residual and the ``(potentials, plan)`` pair in ``best``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    M_full = squared_cost_matrix(a, b, half)
    I = a.weights > 0
    J = b.weights > 0
    M = M_full[np.ix_(I, J)]
    p, q = a.weights[I], b.weights[J]
    logp, logq = np.log(p), np.log(q)
    eps = float(epsilon)

    g = np.zeros(q.size) if init is None else np.array(init.g, dtype=float)[J]
    f = _f_transform(g, logq, M, eps)
    g = _g_transform(f, logp, M, eps)

    def kernel(f, g):
        K = np.exp((f[:, None] + g[None, :] - M) / eps)
        # subnormals make every later matvec an order of magnitude slower
        K[K < _TINY] = 0.0
        return K

    K = kernel(f, g)
    u = np.ones(p.size)
    v = np.ones(q.size)
    residual = np.inf
    it = 0
    converged = False
    while True:
        Kv = K @ (q * v)
        residual = float(np.sum(p * np.abs(u * Kv - 1.0)))
        if residual < tol:
            converged = True
            break
        if it >= max_iters:
            break
        u_new = 1.0 / Kv
        v_new = 1.0 / (K.T @ (p * u_new))
        it += 1
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new)) and np.all(v_new > 0)):
            # exact log-domain step from the last finite state
            f = f + eps * np.log(u)
            g = g + eps * np.log(v)
            f = _f_transform(g, logq, M, eps)
            g = _g_transform(f, logp, M, eps)
            K = kernel(f, g)
            u = np.ones(p.size)
            v = np.ones(q.size)
            continue
        u, v = u_new, v_new
        if (u.max() > _ABSORB_HI or u.min() < _ABSORB_LO
                or v.max() > _ABSORB_HI or v.min() < _ABSORB_LO):
            f = f + eps * np.log(u)
            g = g + eps * np.log(v)
            K = kernel(f, g)
            u = np.ones(p.size)
            v = np.ones(q.size)

    f = f + eps * np.log(u)
    g = g + eps * np.log(v)
    # resolve the (f + c, g - c) ambiguity by balancing the weighted means
    c = 0.5 * (q @ g - p @ f)
    f = f + c
    g = g - c

    f_full = np.empty(a.n)
    g_full = np.empty(b.n)
    f_full[I] = f
    g_full[J] = g
    if not np.all(I):
        f_full[~I] = _f_transform(g, logq, M_full[np.ix_(~I, J)], eps)
    if not np.all(J):
        g_full[~J] = _g_transform(f, logp, M_full[np.ix_(I, ~J)], eps)

    logP = _log(a.weights)[:, None] + _log(b.weights)[None, :] + (
        f_full[:, None] + g_full[None, :] - M_full
    ) / eps
    P = np.exp(logP)
    pot = DualPotentials(f_full, g_full, eps, half)
    plan = TransportPlan(P, a.weights, b.weights, iterations=it, converged=converged)
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"sinkhorn did not converge in {max_iters} iterations "
            f"(marginal residual {residual:.3e}, tol {tol:.1e})",
            residual=residual,
            best=(pot, plan),
        )
    return pot, plan


def sinkhorn_scaling(
    a: PointCloud,
    b: PointCloud,
    epsilon: float,
    max_iters: int = 10_000,
    tol: float = 1e-7,
    half: bool = False,
) -> TransportPlan:
    """Plain exponential-kernel Sinkhorn; cross-check path for large epsilon."""
    M = squared_cost_matrix(a, b, half)
    K = np.exp(-M / epsilon)
    p, q = a.weights, b.weights
    if np.any(K[p > 0][:, q > 0].sum(axis=1) == 0):
        raise DomainError(
            f"kernel underflows at epsilon={epsilon:g}; use the log-domain sinkhorn()"
        )
    u = np.ones(a.n)
    v = np.ones(b.n)
    for it in range(1, max_iters + 1):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            u = np.where(p > 0, p / (K @ v), 0.0)
            v = np.where(q > 0, q / (K.T @ u), 0.0)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DomainError(
                f"scaling overflow at epsilon={epsilon:g}; use the log-domain sinkhorn()"
            )
        P = u[:, None] * K * v[None, :]
        if np.abs(P.sum(axis=1) - p).sum() < tol:
            return TransportPlan(P, p, q, iterations=it)
    raise ConvergenceError("scaling sinkhorn did not converge", best=TransportPlan(P, p, q, it, False))


def entropic_map(x, potentials: DualPotentials, targets: PointCloud) -> np.ndarray:
    """Evaluate the entropic transport map at ``x``.

    A softmax-weighted average of the target points, with logits
    ``log q_k + (g_k - c(x, y_k)) / eps``.  ``x`` may be a single point
    ``(d,)`` or a batch ``(k, d)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != targets.dim:
        raise DomainError(f"dimension mismatch: {X.shape[1]} vs {targets.dim}")
    if potentials.g.shape[0] != targets.n:
        raise DomainError("potentials were computed for a different target cloud")
    C = cdist(X, targets.points, "sqeuclidean")
    if potentials.half_cost:
        C *= 0.5
    logits = _log(targets.weights)[None, :] + (potentials.g[None, :] - C) / potentials.epsilon
    W = softmax(logits, axis=1)
    T = W @ targets.points
    return T[0] if single else T


def barycentric_projection(plan: TransportPlan, source_weights, targets: PointCloud) -> np.ndarray:
    """Conditional mean of the targets given each source point.

    Row ``j`` is ``(pi @ Y)_j / p_j``.  Rows of zero source weight and zero
    plan mass are returned as NaN.
    """
    P = np.asarray(plan.matrix, dtype=float)
    p = np.asarray(source_weights, dtype=float).ravel()
    if P.shape != (p.size, targets.n):
        raise DomainError(f"plan shape {P.shape} does not match ({p.size}, {targets.n})")
    rows = P.sum(axis=1)
    dead = p <= 0
    if np.any(dead & (rows > 0)):
        raise DomainError("plan puts mass on a source point with zero weight")
    T = np.full((p.size, targets.dim), np.nan)
    live = ~dead
    T[live] = (P[live] @ targets.points) / p[live, None]
    return T


def entropic_cost(plan: TransportPlan, cost) -> float:
    """Frobenius inner product of the plan with a cost matrix."""
    P = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan)
    C = np.asarray(cost, dtype=float)
    if P.shape != C.shape:
        raise DomainError(f"shape mismatch: plan {P.shape} vs cost {C.shape}")
    return float(np.sum(P * C))


def w2_sq_entropic(
    a: PointCloud,
    b: PointCloud,
    epsilon: float,
    tol: float = 1e-7,
    max_iters: int = 100_000,
    start: float | None = None,
) -> float:
    """Plan cost of entropic OT with squared cost, reached by epsilon annealing.

    Starts at ``start`` (default: the cost scale) and quarters epsilon down to
    the target, warm-starting each solve from the previous potentials.
    """
    M = squared_cost_matrix(a, b)
    if start is None:
        start = max(float(M.max()), epsilon)
    pot = None
    e = start
    while e > epsilon:
        pot, _ = sinkhorn(a, b, e, max_iters=max_iters, tol=max(tol, 1e-3), init=pot)
        e *= 0.25
    _, plan = sinkhorn(a, b, epsilon, max_iters=max_iters, tol=tol, init=pot)
    return entropic_cost(plan, M)
