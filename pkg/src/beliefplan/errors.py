"""Exception hierarchy shared across the planner."""


class BeliefPlanError(Exception):
    """Base class for all library errors."""


class LtlfSyntaxError(BeliefPlanError):
    """Formula text does not conform to the grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownPropositionError(BeliefPlanError):
    """Formula references a proposition that was never declared."""


class StateBudgetError(BeliefPlanError):
    """Automaton construction exceeded the configured state cap."""


class InvalidCovarianceError(BeliefPlanError):
    """Covariance matrix is not symmetric positive semidefinite."""


class BoundsViolationError(BeliefPlanError):
    """A nominal state or control left its declared box."""


class NumericalError(BeliefPlanError):
    """A linear-algebra step failed (singular innovation, etc.)."""


class UnboundedRegionError(BeliefPlanError):
    """A region polytope has unbounded or empty interior."""


class UnstableGainError(BeliefPlanError):
    """Closed-loop matrix A - B K has spectral radius >= 1."""


class InfeasibleSpecificationError(BeliefPlanError):
    """No accepting automaton run survives pruning (distinct from timeout)."""


class ScenarioError(BeliefPlanError):
    """Scenario file failed schema or cross-reference validation."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


class ScenarioWarning(UserWarning):
    """Non-fatal scenario issue (e.g. step size vs. region size)."""
