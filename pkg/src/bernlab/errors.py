"""Exception hierarchy shared across the package."""


class BernlabError(Exception):
    """Base class for all package-specific errors."""


class ModelMismatchError(BernlabError):
    """Operands belong to different group models."""


class BallCapError(BernlabError):
    """A ball/enumeration request exceeded the configured element cap."""


class DivergenceTooSlowError(BernlabError):
    """A construction could not gather enough usable sites or probability
    mass within its budget (constant families, oversized targets, ...)."""


class DomainError(BernlabError):
    """A partial map was applied outside its domain."""


class ConfigError(BernlabError):
    """Invalid experiment configuration."""


class InvariantViolation(BernlabError):
    """A runtime audit detected a broken invariant (e.g. a collision)."""
