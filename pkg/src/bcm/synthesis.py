"""Barycenter synthesis outside the Gaussian family.

* exact barycenters of uniform 1D samples, where quantile functions average;
* entropic barycenters of grid measures by iterative Bregman projections.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DomainError
from .qp import check_coords

MASS_TOL = 1e-10
_TINY = 1e-290


def as_sorted_sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    if np.any(np.diff(x) < 0):
        raise DomainError("sample is not sorted")
    return x


def as_grid_measure(m, name: str = "grid") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise DomainError(f"{name} must be a non-empty 2D array, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise DomainError(f"{name} has negative or non-finite mass")
    if abs(m.sum() - 1.0) > MASS_TOL:
        raise DomainError(f"{name} has total mass {m.sum():.17g}, not 1")
    return m


def monotone_map_1d(src, dst) -> np.ndarray:
    """Optimal 1D map between uniform samples of equal size.

    Entry ``k`` is the ``dst`` value with the same rank as ``src[k]`` (stable
    ranking, so ties keep input order).  For sorted ``src`` this is just
    ``sort(dst)``.
    """
    src = np.asarray(src, dtype=float).ravel()
    dst = np.asarray(dst, dtype=float).ravel()
    if src.size != dst.size:
        raise DomainError(f"sample sizes differ: {src.size} vs {dst.size}")
    out = np.empty_like(src)
    out[np.argsort(src, kind="stable")] = np.sort(dst, kind="stable")
    return out


def quantile_barycenter_1d(lam, refs: Sequence) -> np.ndarray:
    """Rank-wise convex combination of the references' order statistics."""
    lam = check_coords(lam)
    if len(refs) != lam.size:
        raise DomainError(f"{lam.size} coordinates for {len(refs)} references")
    R = [np.sort(np.asarray(r, dtype=float).ravel(), kind="stable") for r in refs]
    if len({r.size for r in R}) != 1:
        raise DomainError("references have different sample sizes")
    return np.sort(sum(l * r for l, r in zip(lam, R)))


def w2_sq_1d(x, y) -> float:
    """Exact squared W2 between two uniform samples of equal size."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size != y.size:
        raise DomainError("sample sizes differ")
    return float(np.mean((x - y) ** 2))


def grid_cost(height: int, width: int) -> np.ndarray:
    """Squared distances between pixel centers at unit spacing, row-major."""
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    P = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
    diff = P[:, None, :] - P[None, :, :]
    return np.einsum("abk,abk->ab", diff, diff)


class _DenseKernel:
    def __init__(self, h, w, eps):
        K = np.exp(-grid_cost(h, w) / eps)
        K[K < _TINY] = 0.0
        self.K = K

    def __call__(self, V):
        # V: (p, N); K is symmetric
        return V @ self.K


class _SeparableKernel:
    def __init__(self, h, w, eps):
        self.shape = (h, w)
        ih = np.arange(h, dtype=float)
        iw = np.arange(w, dtype=float)
        self.Kh = np.exp(-((ih[:, None] - ih[None, :]) ** 2) / eps)
        self.Kw = np.exp(-((iw[:, None] - iw[None, :]) ** 2) / eps)
        self.Kh[self.Kh < _TINY] = 0.0
        self.Kw[self.Kw < _TINY] = 0.0

    def __call__(self, V):
        p = V.shape[0]
        img = V.reshape(p, *self.shape)
        out = np.einsum("ab,pbc,dc->pad", self.Kh, img, self.Kw, optimize=True)
        return out.reshape(p, -1)


def _log_kernel_apply(X, LKh, LKw):
    # X: (p, H, W) log-scalings; returns log(K exp(X)) by two 1D log-sum-exps
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = logsumexp(X[:, :, None, :] + LKw[None, None, :, :], axis=-1)
        return logsumexp(Y[:, None, :, :] + LKh[None, :, :, None], axis=2)


def _ibp_log(w, A, shape, epsilon, max_iters, tol):
    h, wd = shape
    ih = np.arange(h, dtype=float)
    iw = np.arange(wd, dtype=float)
    LKh = -((ih[:, None] - ih[None, :]) ** 2) / epsilon
    LKw = -((iw[:, None] - iw[None, :]) ** 2) / epsilon
    with np.errstate(divide="ignore"):
        logA = np.log(A).reshape(-1, h, wd)
    logv = np.zeros_like(logA)
    bary = None
    change = np.inf
    for _ in range(max_iters):
        logu = logA - _log_kernel_apply(logv, LKh, LKw)
        logKtu = _log_kernel_apply(logu, LKh, LKw)
        logb = np.tensordot(w, logKtu, axes=1)
        logv = logb[None] - logKtu
        new = np.exp(logb - logsumexp(logb))
        if bary is not None:
            change = float(np.abs(new - bary).sum())
        bary = new
        if change < tol:
            return bary
    raise ConvergenceError(
        f"IBP did not converge in {max_iters} iterations (change {change:.3e})",
        residual=change,
        best=bary,
    )


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a / b, 0.0)


def ibp_barycenter(
    lam,
    refs: Sequence,
    epsilon: float,
    max_iters: int = 5000,
    tol: float = 1e-7,
    method: str = "dense",
) -> np.ndarray:
    """Entropic Wasserstein barycenter of grid measures.

    Iterative Bregman projections with the Gibbs kernel of the squared
    pixel-distance cost.  ``method="dense"`` multiplies by the full
    ``(HW, HW)`` kernel; ``"separable"`` applies it as two 1D convolutions;
    ``"log"`` runs the separable form on log-scalings, which stays finite
    at small ``epsilon`` where the other two overflow.
    Converged when successive normalized iterates differ by less than
    ``tol`` in l1.
    """
    lam = check_coords(lam)
    if len(refs) != lam.size:
        raise DomainError(f"{lam.size} coordinates for {len(refs)} references")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    grids = [np.asarray(r, dtype=float) for r in refs]
    shape = grids[0].shape
    if any(g.shape != shape for g in grids) or len(shape) != 2:
        raise DomainError("references must share one 2D grid")
    for i, g in enumerate(grids):
        if not g.sum() > 0:
            raise DomainError(f"reference {i} has zero mass")
        as_grid_measure(g, f"refs[{i}]")
    keep = lam > 0
    w = lam[keep]
    A = np.array([g.ravel() for g, k in zip(grids, keep) if k])
    if method == "log":
        return _ibp_log(w, A, shape, epsilon, max_iters, tol)
    if method == "dense":
        Kmul = _DenseKernel(*shape, epsilon)
    elif method == "separable":
        Kmul = _SeparableKernel(*shape, epsilon)
    else:
        raise DomainError(f"unknown IBP method {method!r}")

    v = np.ones_like(A)
    bary = None
    change = np.inf
    for it in range(1, max_iters + 1):
        Kv = Kmul(v)
        if np.any((A > 0) & (Kv <= 0)):
            raise DomainError(
                f"Gibbs kernel underflows at epsilon={epsilon:g}; increase epsilon"
            )
        u = _safe_div(A, Kv)
        Ktu = Kmul(u)
        with np.errstate(divide="ignore"):
            logb = w @ np.log(Ktu)
        new = np.exp(logb)
        v = _safe_div(np.broadcast_to(new, Ktu.shape), Ktu)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"scaling overflow at epsilon={epsilon:g}; increase epsilon")
        total = new.sum()
        if not total > 0:
            raise DomainError("barycenter lost all mass; increase epsilon")
        new = new / total
        if bary is not None:
            change = float(np.abs(new - bary).sum())
        bary = new
        if change < tol:
            return bary.reshape(shape)
    raise ConvergenceError(
        f"IBP did not converge in {max_iters} iterations (change {change:.3e})",
        residual=change,
        best=bary.reshape(shape),
    )
