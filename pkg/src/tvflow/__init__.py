"""Certified simulator for the total-variation gradient flow with sources.

The flow evolves a state on a 1D interval or 2D box with zero boundary
values by implicit time stepping; each step is a proximal problem solved
by dual ascent, and the dual field it returns certifies — at runtime,
with explicit tolerances — the structural properties of the computed
trajectory: the discrete evolution equation itself, flatness of the
coupling, the boundary sign condition, the integration-by-parts
identity, the energy ledger, stability and contraction estimates, and
time-regularization limits.
"""

from .certificates import (
    CertificateReport,
    check_apriori,
    check_boundary_sign,
    check_contraction,
    check_equation,
    check_flatness,
    check_green,
    check_main_estimate,
)
from .config import ConfigError, RunSpec, parse_config
from .energy import StepRecord, TvMode, energy_ledger, flatness_gap, total_variation
from .grid import (
    DualField,
    Grid,
    ScalarField,
    boundary_flux,
    boundary_trace,
    divergence,
    face_pairing,
    gradient,
    inner_product,
    interior_face_pairing,
    l2_norm,
    sup_norm,
    truncate,
)
from .io import read_diagnostics, read_dual, read_snapshot, write_dual, write_snapshot
from .prox import ProxConfig, ProxResult, duality_gap, rof_prox, taut_string_1d
from .steklov import (
    TimeSeries,
    Weight,
    approximate_limit,
    backward_average,
    centered_average,
    discrete_gronwall,
    l1_convergence_rate,
    l1_distance,
    loglog_slope,
)
from .stepper import (
    AbortedRunError,
    SourceTerm,
    Trajectory,
    TruncatedPower,
    average_source,
    run,
    step,
)
from .studies import ExtinctionStudy, MollifyStudy, extinction_study, mollification_study

__version__ = "1.0.0"

__all__ = [
    "CertificateReport", "check_apriori", "check_boundary_sign",
    "check_contraction", "check_equation", "check_flatness", "check_green",
    "check_main_estimate",
    "ConfigError", "RunSpec", "parse_config",
    "StepRecord", "TvMode", "energy_ledger", "flatness_gap", "total_variation",
    "DualField", "Grid", "ScalarField", "boundary_flux", "boundary_trace",
    "divergence", "face_pairing", "gradient", "inner_product",
    "interior_face_pairing", "l2_norm", "sup_norm", "truncate",
    "read_diagnostics", "read_dual", "read_snapshot", "write_dual", "write_snapshot",
    "ProxConfig", "ProxResult", "duality_gap", "rof_prox", "taut_string_1d",
    "TimeSeries", "Weight", "approximate_limit", "backward_average",
    "centered_average", "discrete_gronwall", "l1_convergence_rate",
    "l1_distance", "loglog_slope",
    "AbortedRunError", "SourceTerm", "Trajectory", "TruncatedPower",
    "average_source", "run", "step",
    "ExtinctionStudy", "MollifyStudy", "extinction_study", "mollification_study",
    "__version__",
]
