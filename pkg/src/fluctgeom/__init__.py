"""Information-geometric fluctuation theory: Riemannian metrics of density
families, their curvature, geodesic distances, the gaussian representation
and the invariant fluctuation theorems."""

__version__ = "0.1.0"

from .charts import ControlParams, CoordinateChange, DensityFamily, Point, Support  # noqa: E402
from .errors import FluctGeomError  # noqa: E402
from .expansion import asymptotic_ratio, spherical_curvature_scalar_at, spherical_frame, spherical_function  # noqa: E402
from .fieldexpr import parse_field  # noqa: E402
from .gaussrep import (  # noqa: E402
    curvature_radius, entropies, find_mode, gaussian_partition, information_potential, probability_weight,
)
from .geodesics import exp_map, log_map, separation_distance, shoot_geodesic  # noqa: E402
from .geometry import MetricField, constant_metric, curvature_at, metric_residual, solve_metric_1d  # noqa: E402
from .theorems import fluctuation_suite, sample_family  # noqa: E402
from .thermo import equilibrium_state, gaussian_applicability, legendre_with_correction, ruppeiner_tensor  # noqa: E402
from .workbench.catalog import builtin_family, family_gate  # noqa: E402

__all__ = [
    "ControlParams", "CoordinateChange", "DensityFamily", "FluctGeomError", "MetricField", "Point", "Support",
    "asymptotic_ratio", "builtin_family", "constant_metric", "curvature_at", "curvature_radius", "entropies",
    "equilibrium_state", "exp_map", "family_gate", "find_mode", "fluctuation_suite", "gaussian_applicability",
    "gaussian_partition", "information_potential", "legendre_with_correction", "log_map", "metric_residual",
    "parse_field", "probability_weight", "ruppeiner_tensor", "sample_family", "separation_distance",
    "shoot_geodesic", "solve_metric_1d", "spherical_curvature_scalar_at", "spherical_frame", "spherical_function",
]
