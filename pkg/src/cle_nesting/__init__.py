"""Nesting statistics of conformal loop ensembles.

Large-deviation rates for the number of CLE_κ loops surrounding a small
ball, the dimension spectrum they induce, weighted loop counts (with the
κ = 4 free-field closed forms) and a Monte Carlo layer that checks the rates
on the underlying renewal process.
"""

from .errors import ConfigError, ConvergenceError, DomainError, ResourceError
from .ldp import (
    ConjugateResult,
    MgfSpec,
    cramer_interval_rate,
    gaussian_mgf,
    legendre_transform,
    rate_nu,
    symmetric_bernoulli_mgf,
)
from .montecarlo import (
    SimConfig,
    SimReport,
    convolution_oracle,
    geometric_sum_tail_test,
    overshoot_tail_test,
    simulate_weighted_window,
    simulate_window,
)
from .nesting import (
    EMPTY,
    Empty,
    NestingCurve,
    curve_parametric,
    dim_phi,
    gamma_nu,
    nesting_curve,
    nu_max,
    nu_typical,
    second_derivative_check,
)
from .radius_law import (
    KappaParam,
    RadiusLaw,
    cdf_T,
    density_T,
    lambda_kappa,
    lambda_kappa_deriv,
    mean_T,
    radius_law,
    sample_T,
)
from .weighted import (
    GFF_SIGMA,
    GffParams,
    WeightLaw,
    dim_weighted,
    gamma_joint,
    gff_dim_closed,
    gff_nu_profile,
    gff_saddle,
    lambda_4,
    minimize_nu,
)

__version__ = "0.1.0"
