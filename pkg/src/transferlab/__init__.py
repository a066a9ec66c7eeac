"""Transfer matrices, N-space projectors and decoupling bounds for scalar fields on metric lattices."""

__version__ = "0.1.0"

from .assembly import GreenKernel, WeightedOperator, agmon_distance, assemble_helmholtz, green_kernel, solve
from .errors import (
    ConfigurationError,
    GeometryError,
    InputError,
    MetricError,
    NumericError,
    TransferLabError,
    UsageError,
)
from .lattice import Lattice, MetricField, MetricSpec, build_lattice, check_stable_positivity, measure_weights, sample_metric
from .nspace import NSpace, SliceSpace, SliceVector, embed, n_inner, restrict, slice_space, slice_sqrt_apply
from .markov import Projector, Region, cross_norm, markov_residual, projector, region_from_mask, separation_check
from .transfer import (
    Propagator,
    SpectralReport,
    composition_residual,
    decay_rate,
    generator_spectrum,
    omega_max,
    operator_norm,
    propagator,
    self_adjointness_check,
    symmetrized_transfer,
)
from .curvecoords import CurveChart, DecouplingReport, build_chart, chart_g11_sup, decoupling_bound, decoupling_experiment, map_regions
