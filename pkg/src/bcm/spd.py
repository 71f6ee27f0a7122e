"""Symmetric positive definite matrix utilities.

Square roots go through a symmetric eigendecomposition.  A coupled
Newton-Schulz iteration is kept as an alternative path for benchmarking.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, IllConditionedError

SYM_RTOL = 1e-12
EIG_RTOL = 1e-12
COND_CAP = 1e12


def as_spd(S, name: str = "S") -> np.ndarray:
    """Validate ``S`` as SPD and return a symmetrized float copy.

    Raises
    ------
    DomainError
        If ``S`` is not square, not symmetric to ``SYM_RTOL`` (relative
        Frobenius), or has an eigenvalue at or below ``EIG_RTOL`` times the
        largest one.
    """
    S = np.array(S, dtype=float, copy=True)
    if S.ndim == 0:
        S = S.reshape(1, 1)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DomainError(f"{name} has non-finite entries")
    norm = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > SYM_RTOL * max(norm, np.finfo(float).tiny):
        raise DomainError(f"{name} is not symmetric")
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    if w[-1] <= 0 or w[0] <= EIG_RTOL * w[-1]:
        raise DomainError(
            f"{name} is not positive definite: eigenvalue {w[0]:.6g} "
            f"(largest {w[-1]:.6g})"
        )
    return S


def _eig(S):
    w, V = np.linalg.eigh(as_spd(S))
    return w, V


def _apply(V, w):
    B = (V * w) @ V.T
    return 0.5 * (B + B.T)


def sqrt_spd(S) -> np.ndarray:
    """Return the unique SPD square root of ``S``."""
    w, V = _eig(S)
    return _apply(V, np.sqrt(w))


def inv_sqrt_spd(S, cond_cap: float = COND_CAP) -> np.ndarray:
    """Return ``S^{-1/2}``.

    Raises
    ------
    IllConditionedError
        If the condition number of ``S`` exceeds ``cond_cap``.
    """
    w, V = _eig(S)
    cond = w[-1] / w[0]
    if cond > cond_cap:
        raise IllConditionedError(
            f"condition number {cond:.3g} exceeds cap {cond_cap:.3g}"
        )
    return _apply(V, 1.0 / np.sqrt(w))


def sqrt_and_inv_sqrt(S, cond_cap: float = COND_CAP):
    """Both ``S^{1/2}`` and ``S^{-1/2}`` from a single decomposition."""
    w, V = _eig(S)
    if w[-1] / w[0] > cond_cap:
        raise IllConditionedError(
            f"condition number {w[-1] / w[0]:.3g} exceeds cap {cond_cap:.3g}"
        )
    r = np.sqrt(w)
    return _apply(V, r), _apply(V, 1.0 / r)


def sqrt_spd_newton_schulz(S, tol: float = 1e-14, max_iters: int = 100) -> np.ndarray:
    """Square root by the coupled Newton-Schulz iteration.

    Converges for any SPD input after scaling by the Frobenius norm; the rate
    degrades with the condition number.
    """
    S = as_spd(S)
    d = S.shape[0]
    c = np.linalg.norm(S)
    Y = S / c
    Z = np.eye(d)
    I3 = 3.0 * np.eye(d)
    for _ in range(max_iters):
        T = 0.5 * (I3 - Z @ Y)
        Y = Y @ T
        Z = T @ Z
        if np.linalg.norm(Y @ Y - S / c) <= tol:
            break
    B = Y * np.sqrt(c)
    return 0.5 * (B + B.T)


def bures_w2_sq(S0, S1) -> float:
    """Squared 2-Wasserstein distance between N(0, S0) and N(0, S1)."""
    S0 = as_spd(S0, "S0")
    S1 = as_spd(S1, "S1")
    if S0.shape != S1.shape:
        raise DomainError(f"dimension mismatch: {S0.shape} vs {S1.shape}")
    R0 = sqrt_spd(S0)
    cross = np.linalg.eigvalsh(0.5 * ((R0 @ S1 @ R0) + (R0 @ S1 @ R0).T))
    val = np.trace(S0) + np.trace(S1) - 2.0 * np.sum(np.sqrt(np.clip(cross, 0.0, None)))
    return float(max(val, 0.0))


def bures_w2(S0, S1) -> float:
    return float(np.sqrt(bures_w2_sq(S0, S1)))


def random_spd(d: int, rng: np.random.Generator, min_eig: float = 0.1) -> np.ndarray:
    G = rng.standard_normal((d, d))
    return G @ G.T / d + min_eig * np.eye(d)
