"""
Exception family for the simulator.
Everything derives from ValueError so callers that only care about
"bad input" can keep catching that.
"""


class CRNError(ValueError):
    """Base class for simulator errors"""


class ScenarioError(CRNError):
    """Topology generation or validation failed"""


class GameSpecError(CRNError):
    """An operation was called with a spec it does not support"""


class LearningError(CRNError):
    """Learner received unusable input (e.g. NaN utilities)"""


class OracleBudgetError(CRNError):
    """Exhaustive enumeration would exceed the configured budget"""


class FixtureError(CRNError):
    """A built-in fixture failed its construction self-check"""
