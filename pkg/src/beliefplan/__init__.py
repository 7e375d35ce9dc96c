"""Belief-space motion planning for chance-constrained finite-trace tasks."""

from .dfa import Dfa, Guard, compile_to_dfa, export_dot
from .dynamics import (
    Belief,
    LinearGaussianSystem,
    MeasurementZone,
    NominalPlan,
    SimulationResult,
    lqr_gain,
    propagate_belief,
    propagate_covariances,
    propagate_plan,
    simulate_closed_loop,
)
from .errors import (
    BeliefPlanError,
    BoundsViolationError,
    InfeasibleSpecificationError,
    InvalidCovarianceError,
    LtlfSyntaxError,
    NumericalError,
    ScenarioError,
    ScenarioWarning,
    StateBudgetError,
    UnboundedRegionError,
    UnknownPropositionError,
    UnstableGainError,
)
from .geometry import (
    AdjacencyGraph,
    AtomicProp,
    Polytope,
    build_adjacency_graph,
    halfspace_prob,
    label_belief,
    polytope_avoid_lower_bound,
    polytope_contains,
    polytope_prob_lower_bound,
    workspace_marginal,
)
from .guide import (
    GuidePath,
    GuideSearch,
    SimplifiedModel,
    biased_target,
    fixed_speed_step,
    plan_guide,
    segment_for,
    uniform_target,
)
from .ltlf import eval_word, formula_atoms, parse_formula, pretty
from .planner import (
    PlannerConfig,
    Solution,
    ValidationReport,
    benchmark_csv,
    derive_seed,
    run_benchmark,
    solution_from_dict,
    solve,
    trajectory_csv,
    trajectory_json,
    validate_monte_carlo,
)
from .scenario import Scenario, load_scenario
from .task_graph import (
    BlockedPair,
    PrunedDfa,
    TaskPlan,
    conflicting_pairs,
    export_pruned_dot,
    prune_letters,
)
from .tree import BeliefTree, TreeVertex, check_accepting

__version__ = "0.1.0"
