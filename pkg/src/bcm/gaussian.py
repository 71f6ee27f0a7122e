"""Bures-Wasserstein geometry of zero-mean Gaussians.

Gaussians are represented by their covariance matrices throughout.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DomainError
from .qp import check_coords, solve_simplex_qp
from .spd import as_spd, bures_w2, sqrt_and_inv_sqrt, sqrt_spd

def transport_matrix(S0, Si) -> np.ndarray:
    """Matrix ``C`` of the optimal map ``x -> C x`` from N(0, S0) to N(0, Si).

    ``C = S0^{-1/2} (S0^{1/2} Si S0^{1/2})^{1/2} S0^{-1/2}``, symmetric, with
    ``C S0 C = Si``.
    """
    S0 = as_spd(S0, "S0")
    Si = as_spd(Si, "Si")
    if S0.shape != Si.shape:
        raise DomainError(f"dimension mismatch: {S0.shape} vs {Si.shape}")
    R, Rinv = sqrt_and_inv_sqrt(S0)
    C = Rinv @ sqrt_spd(R @ Si @ R) @ Rinv
    return 0.5 * (C + C.T)


def gram_gaussian(S0, refs: Sequence) -> np.ndarray:
    """Gram matrix ``A_ij = Tr((C_i - I)(C_j - I) S0)`` for Gaussian references.

    Built as ``B B^T`` with ``B_i = vec((C_i - I) S0^{1/2})`` so it is PSD by
    construction.
    """
    S0 = as_spd(S0, "S0")
    if len(refs) == 0:
        raise DomainError("need at least one reference")
    d = S0.shape[0]
    R = sqrt_spd(S0)
    rows = [((transport_matrix(S0, Si) - np.eye(d)) @ R).ravel() for Si in refs]
    B = np.array(rows)
    A = B @ B.T
    return 0.5 * (A + A.T)


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    cov: np.ndarray
    iterations: int
    residual: float


def barycenter_residual(S, refs: Sequence, lam) -> float:
    """``||sum_i lam_i C_i(S -> S_i) - I||_F``; zero exactly at the barycenter."""
    S = as_spd(S)
    d = S.shape[0]
    total = sum(l * transport_matrix(S, Si) for l, Si in zip(lam, refs) if l > 0)
    return float(np.linalg.norm(total - np.eye(d)))


def gaussian_barycenter(lam, refs: Sequence, tol: float = 1e-10, max_iters: int = 1000) -> BarycenterResult:
    """Barycenter of zero-mean Gaussians by fixed-point iteration.

    ``S <- S^{-1/2} (sum_i lam_i (S^{1/2} S_i S^{1/2})^{1/2})^2 S^{-1/2}``,
    started from the linear mixture ``sum_i lam_i S_i``.  Stops once the
    first-order residual ``||sum_i lam_i C_i - I||_F`` is below ``tol``.
    """
    lam = check_coords(lam)
    if len(refs) != lam.size or lam.size == 0:
        raise DomainError(f"{lam.size} coordinates for {len(refs)} references")
    refs = [as_spd(S, f"refs[{i}]") for i, S in enumerate(refs)]
    d = refs[0].shape[0]
    if any(S.shape != (d, d) for S in refs):
        raise DomainError("references have different dimensions")
    active = [(l, S) for l, S in zip(lam, refs) if l > 0]
    I = np.eye(d)

    S = sum(l * Si for l, Si in active)
    residual = np.inf
    for it in range(max_iters + 1):
        R, Rinv = sqrt_and_inv_sqrt(S)
        Msum = sum(l * sqrt_spd(R @ Si @ R) for l, Si in active)
        C = Rinv @ Msum @ Rinv
        residual = float(np.linalg.norm(0.5 * (C + C.T) - I))
        if residual < tol:
            return BarycenterResult(S, it, residual)
        if it == max_iters:
            break
        S = Rinv @ Msum @ Msum @ Rinv
        S = 0.5 * (S + S.T)
    raise ConvergenceError(
        f"Gaussian barycenter did not converge in {max_iters} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
        best=BarycenterResult(S, max_iters, residual),
    )


def wishart_shifted(d: int, rng: np.random.Generator, shift: float = 0.5) -> np.ndarray:
    """``G G^T / d + shift I`` with ``G`` a d x d standard Gaussian matrix."""
    G = rng.standard_normal((d, d))
    S = G @ G.T / d + shift * np.eye(d)
    return 0.5 * (S + S.T)


def trial_rng(*key: int) -> np.random.Generator:
    """Counter-based generator for an independent, reproducible stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class CovarianceConfig:
    p: int = 6
    d: int = 10
    ns: tuple = (10, 30, 100, 300, 1000)
    trials: int = 50
    seed: int = 0
    lam: tuple | None = None
    sampling: bool = True
    tol: float = 1e-10
    max_iters: int = 1000
    threads: int = 1

    def validate(self):
        from .errors import ConfigError

        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.p < 1 or self.d < 1:
            raise ConfigError("p and d must be positive")
        if not self.ns or any(int(n) < 1 for n in self.ns):
            raise ConfigError("sample sizes must be positive")
        if self.sampling and any(int(n) < self.d for n in self.ns):
            raise ConfigError("sample sizes below d give a singular empirical covariance")
        if self.lam is not None:
            if len(self.lam) != self.p:
                raise ConfigError(f"lam has {len(self.lam)} entries, expected p={self.p}")
            try:
                check_coords(self.lam)
            except DomainError as exc:
                raise ConfigError(str(exc)) from exc


COVARIANCE_COLUMNS = ("n", "trial", "w2_bcm", "w2_empirical", "lambda_err")


def _covariance_trial(cfg: CovarianceConfig, trial: int):
    rng = trial_rng(cfg.seed, trial)
    lam_true = np.asarray(cfg.lam, dtype=float) if cfg.lam is not None else rng.dirichlet(np.ones(cfg.p))
    refs = [wishart_shifted(cfg.d, rng) for _ in range(cfg.p)]
    S_true = gaussian_barycenter(lam_true, refs, cfg.tol, cfg.max_iters).cov
    L = np.linalg.cholesky(S_true)
    rows = []
    for n in cfg.ns:
        n = int(n)
        if cfg.sampling:
            X = trial_rng(cfg.seed, trial, n).standard_normal((n, cfg.d)) @ L.T
            S_emp = X.T @ X / n
        else:
            S_emp = S_true
        A = gram_gaussian(S_emp, refs)
        lam_hat = solve_simplex_qp(A).lam
        S_hat = gaussian_barycenter(lam_hat, refs, cfg.tol, cfg.max_iters).cov
        rows.append((
            n,
            trial,
            bures_w2(S_true, S_hat),
            bures_w2(S_true, S_emp),
            float(np.abs(lam_hat - lam_true).max()),
        ))
    return rows


def run_covariance_experiment(cfg: CovarianceConfig) -> list[tuple]:
    """Barycenter-parameterized covariance estimation versus the empirical covariance.

    Per trial: draw coordinates and Wishart-shifted references, synthesize
    the true covariance, and for every sample size estimate the coordinates
    from the empirical covariance.  Returns rows of ``COVARIANCE_COLUMNS``,
    sorted by ``(n, trial)``.
    """
    cfg.validate()
    trials = range(cfg.trials)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            chunks = list(pool.map(lambda t: _covariance_trial(cfg, t), trials))
    else:
        chunks = [_covariance_trial(cfg, t) for t in trials]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def summarize_covariance(rows) -> list[tuple]:
    """Median and interquartile range of both error columns per sample size."""
    out = []
    for n in sorted({r[0] for r in rows}):
        bcm = np.array([r[2] for r in rows if r[0] == n])
        emp = np.array([r[3] for r in rows if r[0] == n])
        q = lambda x: np.percentile(x, [25, 50, 75])
        b25, b50, b75 = q(bcm)
        e25, e50, e75 = q(emp)
        out.append((n, b50, b25, b75, e50, e25, e75))
    return out
