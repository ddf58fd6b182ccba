"""Linear and convex aggregation of kernel density estimators under L2 risk."""

__version__ = "0.1.0"

from ._errors import QuadratureError, SolverError, UnsupportedCapabilityError
from .aggregation import (
    AggregateWeights,
    AveragedAggregate,
    GramSystem,
    averaged_aggregate,
    convex_weights,
    gram_system,
    inner_product,
    kde_pool_factory,
    linear_weights,
    make_splits,
    multi_kernel_pool,
)
from .densities import SamplePoints, get_density, standard_gaussian
from .kde import FIXED_GRID, KdeEstimator, bandwidth_grid, fit_kde, fourier_mise, split_sizes
from .kernels import GaussianKernel, PinskerKernel, kernel_from_name
from .risk import ise, mise_mc, nrd, nrd0, oracle_risk, ucv_select
from .rng import SeedProvenance
from .simplex_qp import QpProblem, solve_simplex_qp

__all__ = [
    "FIXED_GRID",
    "AggregateWeights",
    "AveragedAggregate",
    "GaussianKernel",
    "GramSystem",
    "KdeEstimator",
    "PinskerKernel",
    "QpProblem",
    "QuadratureError",
    "SamplePoints",
    "SeedProvenance",
    "SolverError",
    "UnsupportedCapabilityError",
    "averaged_aggregate",
    "bandwidth_grid",
    "convex_weights",
    "fit_kde",
    "fourier_mise",
    "get_density",
    "gram_system",
    "inner_product",
    "ise",
    "kde_pool_factory",
    "kernel_from_name",
    "linear_weights",
    "make_splits",
    "mise_mc",
    "multi_kernel_pool",
    "nrd",
    "nrd0",
    "oracle_risk",
    "solve_simplex_qp",
    "split_sizes",
    "standard_gaussian",
    "ucv_select",
]
