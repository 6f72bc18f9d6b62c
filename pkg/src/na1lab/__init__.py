"""Arbitrage analysis, numeraire portfolios and hedging for finite markets
under convex trading constraints."""

from .errors import (
    InfeasibleError,
    InvalidParameterError,
    Na1LabError,
    NumericError,
    PreconditionError,
    SchemaError,
)
from .arbitrage import (
    ArbitrageCertificate,
    Esmm,
    Na1Certificate,
    check_na1,
    construct_esmm,
    find_classical_arbitrage,
    max_expected_gain,
    relative_arbitrage,
)
from .market import (
    ConstraintSet,
    Cone,
    DiscreteMarket,
    SubspaceBasis,
    admissible_polyhedron,
    allowed_polyhedron,
    generated_cone,
    preset_constraints,
    recession_cone,
    span_and_projection,
    support,
    wealth,
)
from .portfolio import (
    Deflator,
    OptimalPortfolio,
    UtilitySpec,
    deflator_from_numeraire,
    expected_utility,
    expected_utility_gradient,
    maximize_utility,
    numeraire_portfolio,
    relative_log_optimality_gap,
    verify_deflator,
    verify_numeraire,
)
from .hedging import (
    Claim,
    PiecewiseLinearLoss,
    ValuationReport,
    indifference_price,
    real_world_price,
    shortfall_hedge,
    superhedge,
)
from .factor import (
    DiscretizationNote,
    FactorDistribution,
    FactorModel,
    PositivityReport,
    admissibility_halfspaces,
    alpha_recursion,
    arbitrage_ray,
    discretize,
    example_3_7_ratio,
    example_3_8_condition,
    from_standard_form,
    largest_two_dim_supports,
    max_arbitrage_strategy,
    na1_factor,
    na1_triangular,
    two_dim_admissibility,
    two_dim_model,
    validate_positivity,
)

from .cli import RunConfig, main, run
from .io import (
    dumps_canonical,
    load_document,
    parse_factor_model,
    parse_market,
    parse_tree,
)
from .tree import (
    BackwardInductionResult,
    DeflatorProcess,
    PolicyProcess,
    ScenarioTree,
    TreeHedge,
    TreeNa1Report,
    TreeNode,
    backward_induction,
    default_wealth_grid,
    global_na1,
    iid_tree,
    node_market,
    numeraire_process,
    superhedge_tree,
    verify_deflator_process,
)

__all__ = [
    "Na1LabError",
    "SchemaError",
    "InvalidParameterError",
    "InfeasibleError",
    "PreconditionError",
    "NumericError",
    "ConstraintSet",
    "Cone",
    "DiscreteMarket",
    "SubspaceBasis",
    "admissible_polyhedron",
    "allowed_polyhedron",
    "generated_cone",
    "preset_constraints",
    "recession_cone",
    "span_and_projection",
    "support",
    "wealth",
    "ArbitrageCertificate",
    "Na1Certificate",
    "Esmm",
    "find_classical_arbitrage",
    "relative_arbitrage",
    "check_na1",
    "construct_esmm",
    "max_expected_gain",
    "UtilitySpec",
    "OptimalPortfolio",
    "Deflator",
    "maximize_utility",
    "numeraire_portfolio",
    "verify_numeraire",
    "verify_deflator",
    "deflator_from_numeraire",
    "relative_log_optimality_gap",
    "expected_utility",
    "expected_utility_gradient",
    "Claim",
    "PiecewiseLinearLoss",
    "ValuationReport",
    "superhedge",
    "shortfall_hedge",
    "indifference_price",
    "real_world_price",
    "FactorModel",
    "FactorDistribution",
    "PositivityReport",
    "DiscretizationNote",
    "from_standard_form",
    "validate_positivity",
    "arbitrage_ray",
    "na1_factor",
    "max_arbitrage_strategy",
    "alpha_recursion",
    "na1_triangular",
    "two_dim_admissibility",
    "largest_two_dim_supports",
    "two_dim_model",
    "admissibility_halfspaces",
    "discretize",
    "example_3_7_ratio",
    "example_3_8_condition",
    "ScenarioTree",
    "TreeNode",
    "TreeNa1Report",
    "TreeHedge",
    "PolicyProcess",
    "DeflatorProcess",
    "BackwardInductionResult",
    "node_market",
    "iid_tree",
    "global_na1",
    "backward_induction",
    "default_wealth_grid",
    "numeraire_process",
    "verify_deflator_process",
    "superhedge_tree",
    "RunConfig",
    "run",
    "main",
    "dumps_canonical",
    "load_document",
    "parse_market",
    "parse_factor_model",
    "parse_tree",
]

__version__ = "0.1.0"
