"""Measure estimation under the barycentric coding model.

Given reference probability measures and a query, recover the simplex
coordinates whose Wasserstein-2 barycenter best matches the query by
minimizing a quadratic form of displacement-map inner products.
"""
from .errors import BCMError, ConfigError, ConvergenceError, DomainError, IllConditionedError
from .estimate import Estimate, estimate_coords_1d, estimate_coords_pointcloud, estimate_coords_samples
from .gaussian import (
    BarycenterResult,
    gaussian_barycenter,
    gram_gaussian,
    transport_matrix,
)
from .ot import (
    DualPotentials,
    PointCloud,
    TransportPlan,
    barycentric_projection,
    entropic_cost,
    entropic_map,
    sinkhorn,
    squared_cost_matrix,
)
from .qp import (
    MinimizerKind,
    Multiplicity,
    QpSolution,
    gram_from_displacements,
    minimizer_multiplicity,
    project_simplex,
    solve_simplex_qp,
)
from .spd import bures_w2_sq, inv_sqrt_spd, sqrt_spd
from .synthesis import ibp_barycenter, monotone_map_1d, quantile_barycenter_1d

__version__ = "0.1.0"

__all__ = [
    "BCMError",
    "BarycenterResult",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "DualPotentials",
    "Estimate",
    "IllConditionedError",
    "MinimizerKind",
    "Multiplicity",
    "PointCloud",
    "QpSolution",
    "TransportPlan",
    "barycentric_projection",
    "bures_w2_sq",
    "entropic_cost",
    "entropic_map",
    "estimate_coords_1d",
    "estimate_coords_pointcloud",
    "estimate_coords_samples",
    "gaussian_barycenter",
    "gram_from_displacements",
    "gram_gaussian",
    "ibp_barycenter",
    "inv_sqrt_spd",
    "minimizer_multiplicity",
    "monotone_map_1d",
    "project_simplex",
    "quantile_barycenter_1d",
    "sinkhorn",
    "solve_simplex_qp",
    "sqrt_spd",
    "squared_cost_matrix",
    "transport_matrix",
]
