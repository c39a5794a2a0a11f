"""Chart grids, metrics, discrete operators and domains."""

from .grid import ChartGrid, ConformalFactor, GeometryError, MetricField, axis_derivative, metric_from_function
from .operators import Stencil, build_stencil, divergence, gradient, gradient_norm_sq
from .domain import (
    Domain,
    boundary_mean_curvature,
    classify_boundary,
    distance_to_boundary,
    fast_marching,
    make_domain,
    signed_distance,
)

__all__ = [
    "ChartGrid", "ConformalFactor", "GeometryError", "MetricField", "axis_derivative",
    "metric_from_function", "Stencil", "build_stencil", "divergence", "gradient",
    "gradient_norm_sq", "Domain", "boundary_mean_curvature", "classify_boundary",
    "distance_to_boundary", "fast_marching", "make_domain", "signed_distance",
]
