"""Exception types raised across the package."""


class LevelsetError(Exception):
    """Base class for all package errors."""


class RankDeficient(LevelsetError):
    """Constraint Jacobian lost full rank at the queried point."""


class NotPositiveDefinite(LevelsetError):
    """A matrix required to be SPD failed its Cholesky factorization."""


class RequiresIdentityMetric(LevelsetError):
    """Operation is only defined for the identity diffusion matrix."""


class FlowDiverged(LevelsetError):
    """Constraint flow failed to reach the level set."""


class NotSkewSymmetric(LevelsetError):
    """Matrix expected to satisfy A + A^T = 0 does not."""


class NonUnique(LevelsetError):
    """Nearest-point projection found two minimizers at equal distance."""


class MaxIters(LevelsetError):
    """Iteration cap reached before the stop criterion was met."""


class StiffnessBlowup(LevelsetError):
    """Softly constrained chain left the tubular neighborhood."""


class UnknownModel(LevelsetError):
    """No built-in model or reference density under the requested id."""


class DomainMismatch(LevelsetError):
    """Histogram domain does not match the model's parameter domain."""


class ConfigError(LevelsetError):
    """Run configuration failed schema validation."""


class ChainAborted(LevelsetError):
    """A sampling chain stopped early; carries the failing step."""

    def __init__(self, step_index, cause):
        self.step_index = step_index
        self.cause = cause
        super().__init__(f"chain aborted at step {step_index}: {cause}")
