"""Exception types raised across the package."""


class DomainError(ValueError):
    """A parameter or observation lies outside the family's support."""


class ConfigError(ValueError):
    """Invalid configuration.

    ``key`` is the dotted key path (``section.key``) and ``line`` the 1-based
    line number in the source document, when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NoInformationError(ValueError):
    """An estimate was requested with a flat prior and no observations."""


class ContractViolation(ValueError):
    """A user-supplied rule returned a value outside its declared range."""


class RegimeError(ValueError):
    """The two-point least-favourable prior is not optimal at these inputs."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, last_gap):
        self.last_gap = last_gap
        super().__init__(f"{message} (last gap {last_gap:.3e})")
