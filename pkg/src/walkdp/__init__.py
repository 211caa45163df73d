"""Pairwise privacy accounting for decentralized DP-SGD over graphs."""

from .accountant import (
    AccountingConfig,
    BudgetReport,
    GridConfig,
    MatrixReport,
    calibrate_sigma,
    pair_budget,
    pairwise_matrix,
)
from .amplification import (
    AmplificationParams,
    CompositionPlan,
    PlanComponent,
    mu_user_level,
    optimal_sum_squares_oracle,
    record_level_plan,
    strongly_convex_params,
)
from .counts import VisitBound, contribution_count, delta_prime, visit_bound, zeta_for
from .errors import (
    CalibrationError,
    FormatError,
    GraphValidationError,
    GridError,
    UnsupportedOrderError,
    WalkDpError,
)
from .graphs import (
    GraphSpec,
    HittingWeights,
    SpectralReport,
    TransitionMatrix,
    analyze,
    build_transition,
    hitting_profile,
    hitting_weights,
    laplacian_fiedler,
    load_graph_json,
    mc_hitting_oracle,
    named_graph,
)
from .prv import (
    DiscretePrv,
    PrvDistribution,
    compose,
    delta_at,
    discretize,
    epsilon_at,
    prv_gaussian,
    prv_mixture,
    prv_point,
    prv_subsampled_gaussian,
    self_compose,
    suggest_spacing,
)
from .rdp import (
    RdpProfile,
    mixture_profile,
    rdp_compose,
    rdp_mixture,
    rdp_pair_budget,
    rdp_to_epsdelta,
)
from .secagg import SecParams, sec_calibrate, sec_gdp_mu, sec_to_epsdelta
from .simulate import (
    Dataset,
    RunMetrics,
    SimConfig,
    run_decor,
    run_walk_dpsgd,
    synth_logreg_data,
)
from .tradeoff import (
    TradeoffCurve,
    epsdelta_to_curve,
    evaluate,
    evaluate_mixture_curve,
    fdp_to_delta,
    fdp_to_rdp,
    gdp_curve,
    gdp_delta,
    gdp_epsilon,
    identity_curve,
    subsample_cp,
    symmetrize,
)

__version__ = "0.1.0"
