"""Gram matrices of displacement fields and the simplex-constrained QP.

The barycentric coordinates of a query are the minimizers over the simplex
of ``lam @ A @ lam`` where ``A`` collects inner products of the displacement
fields ``T_i - id`` under the query measure.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import ConvergenceError, DomainError

GRAM_SYM_RTOL = 1e-10
GRAM_PSD_RTOL = 1e-8
NULL_RTOL = 1e-8


def check_gram(A) -> np.ndarray:
    """Validate a Gram matrix (symmetric, PSD) and return a symmetrized copy."""
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DomainError(f"Gram matrix must be square and non-empty, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("Gram matrix has non-finite entries")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > GRAM_SYM_RTOL * scale:
        raise DomainError("Gram matrix is not symmetric")
    A = 0.5 * (A + A.T)
    w = np.linalg.eigvalsh(A)
    if w[0] < -GRAM_PSD_RTOL * max(w[-1], 0.0):
        raise DomainError(f"Gram matrix is not PSD: eigenvalue {w[0]:.3g}")
    return A


def check_coords(lam, tol: float = 1e-10) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size == 0 or np.any(lam < -tol) or abs(lam.sum() - 1.0) > tol:
        raise DomainError(f"coordinates are not in the probability simplex: {lam}")
    return lam


def gram_from_displacements(eval_points, eval_weights, maps: Sequence) -> np.ndarray:
    """Weighted inner products of displacements ``T_i(x) - x``.

    ``A_ij = sum_k w_k <T_i(x_k) - x_k, T_j(x_k) - x_k>``.  With uniform
    weights this is the held-out average; with a PMF it is
    ``Tr(diag(w) (T_i - X)(T_j - X)^T)``.  Points of zero weight are skipped.
    """
    X = np.asarray(eval_points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    w = np.asarray(eval_weights, dtype=float).ravel()
    if w.shape[0] != X.shape[0]:
        raise DomainError(f"{w.shape[0]} weights for {X.shape[0]} points")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise DomainError(f"weights must be a PMF (sum {w.sum():.17g})")
    if len(maps) == 0:
        raise DomainError("need at least one map")
    live = w > 0
    rows = []
    for T in maps:
        T = np.asarray(T, dtype=float)
        if T.ndim == 1:
            T = T[:, None]
        if T.shape != X.shape:
            raise DomainError(f"map evaluations have shape {T.shape}, expected {X.shape}")
        D = (T[live] - X[live]) * np.sqrt(w[live])[:, None]
        rows.append(D.ravel())
    F = np.array(rows)
    A = F @ F.T
    return 0.5 * (A + A.T)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite input")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True, eq=False)
class QpSolution:
    lam: np.ndarray
    value: float
    iterations: int
    converged: bool
    gap: float = 0.0


def qp_value(A, c, lam) -> float:
    lam = np.asarray(lam, dtype=float)
    val = lam @ (A @ lam)
    if c is not None:
        val += np.asarray(c, dtype=float) @ lam
    return float(val)


def _fw_gap(grad, lam) -> float:
    # upper bound on suboptimality for a convex objective over the simplex
    return float(grad @ lam - grad.min())


def _polish(A, c, lam, tol):
    """Solve the KKT system on the current support; None if it leaves the simplex."""
    S = np.nonzero(lam > 0)[0]
    k = S.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = 2.0 * A[np.ix_(S, S)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[:k] = -c[S]
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if np.any(sol[:k] < -1e-12):
        return None
    out = np.zeros_like(lam)
    out[S] = np.clip(sol[:k], 0.0, None)
    s = out.sum()
    if not s > 0:
        return None
    return out / s


def solve_simplex_qp(
    A,
    c=None,
    tol: float = 1e-12,
    max_iters: int = 100_000,
    raise_on_failure: bool = True,
) -> QpSolution:
    """Minimize ``lam @ A @ lam + c @ lam`` over the probability simplex.

    Accelerated projected gradient (FISTA with gradient restarts) from the
    uniform point with step ``1 / (2 lambda_max(A))``.  Stops once the
    Frank-Wolfe gap, which bounds the distance to the optimal value, is at
    most ``tol`` times the problem scale ``max(lambda_max(A), |c|_inf)``.
    Every so often the iterate's support is used to solve the KKT system
    exactly, which snaps the answer to machine precision when the support
    has been identified.

    Raises
    ------
    ConvergenceError
        If the gap test fails after ``max_iters``; ``best`` holds the
        best iterate as a ``QpSolution``.
    """
    A = check_gram(A)
    p = A.shape[0]
    c = np.zeros(p) if c is None else np.asarray(c, dtype=float).ravel()
    if c.shape != (p,):
        raise DomainError(f"linear term has shape {c.shape}, expected ({p},)")
    lam_max = float(np.linalg.eigvalsh(A)[-1])
    scale = max(lam_max, float(np.abs(c).max()), np.finfo(float).tiny)
    thresh = tol * scale
    L = 2.0 * lam_max if lam_max > 0 else 2.0 * scale

    def grad(x):
        return 2.0 * (A @ x) + c

    x = np.full(p, 1.0 / p)
    best, best_val = x, qp_value(A, c, x)
    gap = _fw_gap(grad(x), x)
    if p == 1 or gap <= thresh:
        return QpSolution(x, best_val, 0, True, max(gap, 0.0))

    y = x.copy()
    t = 1.0
    last_support = None
    def finish(x, val, gap, it):
        # the gap bounds the objective, not the iterate; snap to the exact
        # KKT point of the support when that is at least as good
        z = _polish(A, c, x, tol)
        if z is not None:
            zgap = _fw_gap(grad(z), z)
            zval = qp_value(A, c, z)
            if zgap <= thresh and zval <= val:
                return QpSolution(z, zval, it, True, max(zgap, 0.0))
        return QpSolution(x, val, it, True, max(gap, 0.0))

    for it in range(1, max_iters + 1):
        gy = grad(y)
        x_new = project_simplex(y - gy / L)
        if gy @ (x_new - x) > 0:
            # momentum is pointing uphill; restart
            t = 1.0
            y = x.copy()
            x_new = project_simplex(x - grad(x) / L)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new

        val = qp_value(A, c, x)
        if val < best_val:
            best, best_val = x, val
        gap = _fw_gap(grad(x), x)
        if gap <= thresh:
            return finish(x, val, gap, it)

        support = tuple(np.nonzero(x > 0)[0])
        if support == last_support or it % 50 == 0:
            z = _polish(A, c, x, tol)
            if z is not None:
                zgap = _fw_gap(grad(z), z)
                zval = qp_value(A, c, z)
                if zgap <= thresh and zval <= val + thresh:
                    return QpSolution(z, zval, it, True, max(zgap, 0.0))
        last_support = support

    sol = QpSolution(best, best_val, max_iters, False, _fw_gap(grad(best), best))
    if raise_on_failure:
        raise ConvergenceError(
            f"simplex QP did not converge in {max_iters} iterations (gap {sol.gap:.3e})",
            residual=sol.gap,
            best=sol,
        )
    return sol


class MinimizerKind(enum.Enum):
    NO_EXACT_SOLUTION = "none"
    UNIQUE = "unique"
    INFINITELY_MANY = "infinite"


@dataclass(frozen=True, eq=False)
class Multiplicity:
    """Structure of ``{lam in simplex : lam @ A @ lam = 0}``.

    ``basis`` spans the numerical null space of ``A`` (columns); ``witness``
    is the minimum-norm zero of the objective on the simplex, if any.
    """

    kind: MinimizerKind
    witness: np.ndarray | None
    basis: np.ndarray


def minimizer_multiplicity(A, tol: float = NULL_RTOL, atol: float = 1e-9) -> Multiplicity:
    A = check_gram(A)
    p = A.shape[0]
    w, V = np.linalg.eigh(A)
    lam_max = max(w[-1], 0.0)
    if lam_max == 0.0:
        E = np.eye(p)
    else:
        E = V[:, w < tol * lam_max]
    k = E.shape[1]
    if k == 0:
        return Multiplicity(MinimizerKind.NO_EXACT_SOLUTION, None, E)
    s = E.sum(axis=0)
    if np.linalg.norm(s) < atol:
        return Multiplicity(MinimizerKind.NO_EXACT_SOLUTION, None, E)

    if k == 1:
        lam = E[:, 0] / s[0]
        if lam.min() < -atol:
            return Multiplicity(MinimizerKind.NO_EXACT_SOLUTION, None, E)
        lam = np.clip(lam, 0.0, None)
        return Multiplicity(MinimizerKind.UNIQUE, lam / lam.sum(), E)

    # polytope {y : E y >= 0, s . y = 1}; lam = E y
    A_ub = -E
    b_ub = np.full(p, atol)
    A_eq = s[None, :]
    b_eq = [1.0]
    bounds = [(None, None)] * k
    feas = linprog(np.zeros(k), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if feas.status != 0:
        return Multiplicity(MinimizerKind.NO_EXACT_SOLUTION, None, E)
    extent = 0.0
    for i in range(p):
        lo = linprog(E[i], A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        hi = linprog(-E[i], A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        extent = max(extent, -hi.fun - lo.fun)
    res = minimize(
        lambda y: y @ y,
        feas.x,
        jac=lambda y: 2.0 * y,
        constraints=[
            {"type": "ineq", "fun": lambda y: E @ y, "jac": lambda y: E},
            {"type": "eq", "fun": lambda y: s @ y - 1.0, "jac": lambda y: s[None, :]},
        ],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 500},
    )
    lam = np.clip(E @ res.x, 0.0, None)
    lam = lam / lam.sum()
    kind = MinimizerKind.INFINITELY_MANY if extent > 10 * atol else MinimizerKind.UNIQUE
    return Multiplicity(kind, lam, E)
