"""Multipartite delocalization measures for mixed single-excitation states."""

from .errors import *  # noqa: F401,F403
from .measures import DelocalizationProfile, tau, tau_max, total_tangle
from .refstate import (
    border_curve,
    border_values,
    build_sigma,
    delocalization_profile,
    e_k,
    fitted_border,
    min_purity,
    partition_plan,
    solve_weights,
)
from .sxstate import (
    DensityMatrix,
    PureState,
    from_pure,
    load_state,
    mix,
    new_density_matrix,
    purity,
    save_state,
    w_state,
)

__version__ = "0.1.0"
