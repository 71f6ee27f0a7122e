"""End-to-end coordinate estimation from samples or weighted point clouds."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .ot import PointCloud, barycentric_projection, entropic_map, sinkhorn
from .qp import QpSolution, gram_from_displacements, solve_simplex_qp
from .synthesis import monotone_map_1d


@dataclass(frozen=True, eq=False)
class Estimate:
    lam: np.ndarray
    value: float
    gram: np.ndarray
    solution: QpSolution


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def pointcloud_maps(
    query: PointCloud,
    refs: Sequence[PointCloud],
    epsilon: float,
    tol: float = 1e-7,
    max_iters: int = 10_000,
    threads: int = 1,
) -> list[np.ndarray]:
    """Barycentric projections ``diag(1/p) pi_i Y_i`` for each reference (unhalved cost)."""
    def one(ref):
        _, plan = sinkhorn(query, ref, epsilon, max_iters=max_iters, tol=tol)
        return barycentric_projection(plan, query.weights, ref)

    return _map(one, refs, threads)


def estimate_coords_pointcloud(
    query: PointCloud,
    refs: Sequence[PointCloud],
    epsilon: float,
    tol: float = 1e-7,
    max_iters: int = 10_000,
    threads: int = 1,
) -> Estimate:
    """Coordinates of a weighted point cloud against weighted references.

    Solves entropic OT to each reference with cost ``|x - y|^2``, projects
    each plan barycentrically, and minimizes the quadratic form of the
    weighted displacement Gram matrix over the simplex.
    """
    if len(refs) == 0:
        raise DomainError("need at least one reference")
    maps = pointcloud_maps(query, refs, epsilon, tol, max_iters, threads)
    A = gram_from_displacements(query.points, query.weights, maps)
    sol = solve_simplex_qp(A)
    return Estimate(sol.lam, sol.value, A, sol)


def estimate_coords_samples(
    query_samples,
    ref_samples: Sequence,
    epsilon: float,
    tol: float = 1e-7,
    max_iters: int = 10_000,
    threads: int = 1,
) -> Estimate:
    """Coordinates from i.i.d. samples with held-out evaluation.

    The first half of ``query_samples`` fits an entropic map (cost
    ``|x - y|^2 / 2``) to every reference sample; the second half is where
    the displacement inner products are averaged.
    """
    X = np.asarray(query_samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise DomainError("need at least two query samples")
    n = X.shape[0] // 2
    fit, held = PointCloud.uniform(X[:n]), X[n:2 * n]

    def one(Y):
        ref = PointCloud.uniform(Y)
        pot, _ = sinkhorn(fit, ref, epsilon, max_iters=max_iters, tol=tol, half=True)
        return entropic_map(held, pot, ref)

    maps = _map(one, list(ref_samples), threads)
    A = gram_from_displacements(held, np.full(held.shape[0], 1.0 / held.shape[0]), maps)
    sol = solve_simplex_qp(A)
    return Estimate(sol.lam, sol.value, A, sol)


def estimate_coords_1d(query, refs: Sequence) -> Estimate:
    """Exact coordinates for uniform 1D samples via monotone rearrangement."""
    x = np.asarray(query, dtype=float).ravel()
    maps = [monotone_map_1d(x, r) for r in refs]
    A = gram_from_displacements(x, np.full(x.size, 1.0 / x.size), maps)
    sol = solve_simplex_qp(A)
    return Estimate(sol.lam, sol.value, A, sol)
