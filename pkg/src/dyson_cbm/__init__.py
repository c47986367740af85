"""The beta=2 Dyson model three ways, its complex Brownian motion representation, and its correlation kernels."""

__version__ = "0.1.0"

from ._accel import backend, set_backend
from .configuration import (
    INTEGER_LATTICE,
    ConditionParams,
    ConditionReport,
    Configuration,
    InfiniteConfigSpec,
    Lattice,
    check_conditions,
    moment_M,
    moment_M_alpha,
    new_configuration,
    restrict,
    shift_and_square,
    vandermonde,
)
from .dyson import (
    Ensemble,
    Trajectory,
    h_transform_density,
    heat_kernel,
    km_transition_density,
    simulate_gue,
    simulate_gue_ensemble,
    simulate_sde,
    simulate_sde_ensemble,
)
from .entire import det_martingale, growth_bound_check, phi, phi_matrix, phi_truncation_sequence
from .errors import *  # noqa: F401,F403
from .kernels import (
    Contour,
    CorrelationRequest,
    KernelContext,
    contour_kernel_K,
    density,
    fredholm_mgf,
    green_G,
    kernel_K,
    multitime_correlation,
)
from .montecarlo import MCEstimate
from .paths import ComplexPath, RealPath, RngStream, TimeGrid, det_martingale_along_path, sample_cbm, sample_real_bm
