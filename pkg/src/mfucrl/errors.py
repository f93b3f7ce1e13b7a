"""Exception types shared across the package."""


class MfucrlError(Exception):
    """Base class for package-specific failures."""


class GridError(MfucrlError, ValueError):
    """Invalid grid size, negative density, or mismatched grids."""


class DynamicsError(MfucrlError):
    """Drift evaluation produced a non-finite value."""


class FitError(MfucrlError):
    """Gaussian-process fit failed (e.g. factorization not positive definite)."""


class PlanningError(MfucrlError):
    """Policy search could not produce a finite-objective candidate."""


class ConfigError(MfucrlError, ValueError):
    """Invalid or unknown configuration value; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
