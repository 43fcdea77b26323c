"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidDensity(ValueError):
    pass


class InvalidProfile(ValueError):
    pass


class InvalidShape(ValueError):
    """Counterexample parameters rejected by the level-set checks."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class NoConvergence(RuntimeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AmbiguousDensity(RuntimeError):
    def __init__(self, message, gap=float("nan")):
        super().__init__(message)
        self.gap = gap


class AssemblyError(RuntimeError):
    pass


class DtTooLarge(RuntimeError):
    pass


class ConfigError(ValueError):
    pass
