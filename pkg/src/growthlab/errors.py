"""Exception hierarchy shared across the package."""


class GrowthLabError(Exception):
    pass


class DomainError(GrowthLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(GrowthLabError, ValueError):
    """A shock process or scenario is internally inconsistent."""


class ResourceError(GrowthLabError):
    """A requested construction exceeds a configured size cap."""


class ConsistencyError(GrowthLabError):
    """Two objects that must describe the same scenario do not."""
