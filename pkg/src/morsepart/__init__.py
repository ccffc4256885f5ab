"""Deterministic particle solver for the 1D quadratic porous medium equation.

Particles move under a Morse-kernel regularized pressure; as the particle
count grows and the kernel width shrinks the reconstructed densities
approach solutions of ``rho_t = 1/2 (rho^2)_xx``.
"""
from .config import EpsilonRule, RunConfig, config_from_dict, parse_config, serialize_config
from .diagnostics import (
    BoundReport,
    bound_report,
    cone_identity_check,
    dissipation,
    entropy,
    entropy_production,
    interaction_energy,
    lp_norm,
    moment,
    reconstruct_density,
    weak_residual,
)
from .dynamics import (
    ParticleState,
    Tolerances,
    Trajectory,
    detach_overlaps,
    gap_lower_bound,
    integrate,
    rhs_convolution,
    rhs_difference_quotient,
)
from .errors import ConfigError, DomainError, IntegrationError, MorseError, PreconditionError
from .kernel import Kernel, conv_density, split_parts, w, w_prime, w_second
from .reference import barenblatt, barenblatt_quantile, fd_pme_solve, l2_distance_to_barenblatt
from .transport import (
    MeasureSpec,
    PiecewiseConstantDensity,
    QuantileFn,
    atomize_lp,
    atomize_measure,
    density_of_quantile,
    quantile_of,
    wasserstein2,
)

__version__ = "0.1.0"
