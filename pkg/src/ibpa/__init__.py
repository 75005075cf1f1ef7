"""Information-bundling position auctions.

Mechanism design toolkit for selling ad slots with publisher-private
inventory information: menu-of-lotteries mechanisms with revenue curves and
quantile mappings, a GSP benchmark, primitive estimation from logs, and a
Monte-Carlo counterfactual simulator.
"""

from .core import (
    AuctionEnvironment, AuctionInstance, CtrModel, InventoryDistribution,
    InvalidInputError, Partition, Regime, RegimeError, ValuationPrior,
    coarsen_environment, coarsen_values, is_refinement, load_environment,
    sample_auction, save_environment,
)
from .curves import RevenueCurve, build_curve, scale_to_slot
from .estimation import (
    IccSequence, IntervalObservation, TurnbullFit, compute_icc,
    estimate_slot_effects, estimate_valuation_priors, monotonize_icc,
    turnbull_em, valuation_bounds,
)
from .gsp import GspConfig, envy_free_upper_bids, run_gsp
from .mechanism import (
    IbpaArtifacts, MechanismOutcome, build_ibpa_artifacts, run_ibpa,
)
from .menus import (
    LotteryPricing, Menu, MenuStats, advertiser_choice, best_bundle,
    collapse_to_top_slot, menu_stats,
)
from .quantiles import (
    QuantileMapper, build_interim_mapper, build_mapper, build_nested_mapper,
)
from .simulate import (
    MechanismSpec, MetricsReport, SimulationConfig, parse_regime,
    run_comparison, welfare_metrics,
)
from .solver import SolveResult, SolverConfig, solve_constrained

__version__ = "0.1.0"
