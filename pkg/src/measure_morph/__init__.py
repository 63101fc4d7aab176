"""Reparametrizing the free Wiener bridge measure into the massive one, numerically."""

from .diffeo import (
    G0,
    Composed,
    DerivBundle,
    Diffeo,
    Exp2m,
    Identity,
    Interval,
    InverseOf,
    Log2m,
    MobiusEnds,
    PowerLaw,
    compose,
    evaluate,
    inverse_eval,
    make_diffeo,
    schwarzian,
    schwarzian_chain,
    schwarzian_fd,
)
from .errors import MeasureMorphError
from .fieldmodes import ModeSpec, dispersion_table, mode_diffeo, sigma
from .measure import (
    IdentityReport,
    MCEstimate,
    WeightBreakdown,
    coefficient_fixed_ends,
    coefficient_g0,
    estimate_identity,
    feynman_kac,
    gaussian_oracle,
    normalizing_coefficient,
    rn_weight,
)
from .paths import (
    Functional,
    PathSample,
    TimeGrid,
    ito_integral,
    make_grid,
    quad_potential,
    sample_bridge,
    sample_wiener,
    transform_path,
)
from .substitution import SubMap, apply_sub, invert_sub, pushforward_covariance, verify_sub_identity

__version__ = "0.1.0"
