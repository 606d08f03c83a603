class UsageError(ValueError):
    """Bad arguments to a library call (wrong index, shape, step size, ...)."""


class NumericalError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """One or more configuration violations, each tagged with its field path."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path}: {msg}" for path, msg in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))

    @property
    def paths(self):
        return [path for path, _ in self.violations]
