"""Wiener chaos propagator solver for linear stochastic evolution equations.

The package splits into the multi-index combinatorics (`multiindex`), the
chaos-series algebra with Wick product and the raising/lowering operators
(`chaos`), discretized evolution operators and noise models (`operators`),
the triangular propagator solver (`propagator`), independent verification
oracles (`oracle`) and the command line front end (`cli`).
"""

from .multiindex import MultiIndex, TruncationBox, enumerate_indices
from .chaos import (
    BoxOverflowError,
    ChaosSeries,
    CoefficientSpace,
    DirectionH,
    UChaosSeries,
    WeightSequence,
    dual_norm_sq,
    dual_pairing,
    hermite,
    malliavin,
    norm_sq_by_order,
    number_operator,
    order_energy,
    skorokhod,
    smallness_radius,
    stoch_exp,
    weighted_norm_sq,
    wick_product,
    xi_eval,
)
from .operators import (
    ConfigError,
    EvolutionProblem,
    NoiseModel,
    NoiseOperatorFamily,
    OperatorFamily,
    Scenario,
    SpatialGrid,
    SpatialNoiseOp,
    apply_Mk,
    coercivity_check,
    estimate_Ck,
    fourier_space,
    load_scenario,
    semigroup_apply,
    time_modes,
)
from .propagator import (
    KVResult,
    PropagatorSolution,
    ResourceCapError,
    SolverDivergenceError,
    default_weights,
    kv_recursion,
    mean_and_moments,
    solution_norm_sq,
    solve,
    u_h_pairing,
    weighted_norm_trajectory,
)
from .oracle import (
    McResult,
    classify_moment_regime,
    closed_form_moment,
    mc_ito,
    moment_integrable,
    solve_deterministic_h,
    wick_space_noise_norm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
