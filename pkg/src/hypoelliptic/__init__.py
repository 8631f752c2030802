"""Numerics for degenerate Ornstein-Uhlenbeck (Kolmogorov-type) operators.

A u = tr(Q∇²u) + <BX, ∇u> with Q ≥ 0 and B real: Gaussian heat kernels,
volume functions and intrinsic dimensions, fractional powers, Poisson
semigroups, Riesz potentials and verification suites.
"""

from .dimensions import (
    DimensionConfig,
    DimensionReport,
    DinfEstimate,
    VolumeTable,
    d0_estimate,
    dimension_report,
    dinf_estimate,
    growth_classify,
    table_reproduce,
    volume_curve,
)
from .errors import (
    DimensionGuardError,
    GuardError,
    HypoellipticError,
    IndefiniteMatrixError,
    InvalidSystemError,
    NotHypoellipticError,
    QuadratureWarning,
    SpectrumConvergenceError,
    TraceHypothesisWarning,
)
from .frac_calc import (
    MAXIMAL_CONSTANT,
    FracSpec,
    balakrishnan_resolvent,
    cesaro_sup,
    extension_eval,
    extension_neumann,
    extension_residual,
    fractional_power,
    generator_apply,
    neumann_constant,
    poisson_apply,
    poisson_kernel,
    poisson_maximal,
    resolvent_apply,
    riesz_apply,
    riesz_poisson_route,
    sobolev_norm,
)
from .harness import SUITES, Check, SuiteResult, load_function, run_suite, to_json
from .heat_kernel import (
    ConstantFn,
    GaussianExpFn,
    cesaro_average,
    chapman_kolmogorov,
    covariance_eval,
    kernel_dual_mass,
    kernel_eval,
    kernel_times,
    kernel_mass,
    log_volume,
    semigroup_apply,
    semigroup_apply_gaussian,
)
from .numerics import QuadSpec, flow_matrices, gramian, mat_exp, quad_semiinf, spectrum
from .ou_model import (
    BUILTIN_NAMES,
    OUSystem,
    StructureReport,
    builtin,
    closed_form_volume,
    filtration,
    kalman_check,
    load_system,
    spectral_abscissa,
    structure_report,
)

__version__ = "0.1.0"
