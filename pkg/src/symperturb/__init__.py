"""Locally supported symplectic and volume-preserving perturbations, with certificates."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .numerics_core import (  # noqa: F401
    Box,
    BumpProfile,
    QuadratureRule,
    SampledMap,
    fd_jacobian,
    log_jacobian,
    make_bell,
    path_integral_1form,
    radial_cutoff,
)
from .generating_function import (  # noqa: F401
    GeneratingFunction,
    SymplecticMapLocal,
    certify_symplectic,
    generate_map,
    genfn_from_map,
    identity_genfn,
)
from .interpolation import DiskDiffeo, CorrectionField, build_Q, build_interpolating_genfn, convolve_form  # noqa: F401
from .extension import (  # noqa: F401
    ExtensionResult,
    IsotopyFamily,
    build_isotopy,
    extend_symplectic,
    extend_volume,
    lagrangian_certificate,
)
from .distortion_lab import (  # noqa: F401
    Contraction,
    DistortionRecord,
    GraftedContraction,
    StableChart,
    distortion,
    linearize_near_zero,
    perturb_orbit,
    stable_chart_projection,
)
from .centralizer import (  # noqa: F401
    CommutingPair,
    PowerMatchReport,
    check_commutation,
    eigenvalue_obstruction,
    match_power,
)
