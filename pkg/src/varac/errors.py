"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class NonProperPolicyError(RuntimeError):
    """An episode failed to terminate, or a policy-evaluation system was singular."""


class DivergenceError(RuntimeError):
    """Critic or actor iterates became non-finite."""


class ProjectionError(RuntimeError):
    """Weighted least-squares normal equations are singular."""
