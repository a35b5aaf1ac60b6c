"""Exception hierarchy shared by all unifi modules."""


class UnifiError(Exception):
    """Base class for all errors raised by this package."""


class ArgError(UnifiError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(UnifiError, ValueError):
    """A configuration document is invalid.

    ``path`` points at the offending key, e.g. ``traffic.clusters[2].band``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message} (at {path})" if path else message)


class IoError(UnifiError, OSError):
    """A stream file could not be read or written."""


class SchemaError(UnifiError, ValueError):
    """A stream file row does not conform to the on-disk schema."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class OrderError(UnifiError):
    """Packet timestamps regress after canonical sorting."""


class GridError(UnifiError, ValueError):
    """Subcarrier indices fall outside the declared canonical grids."""


class DegenerateError(UnifiError, ValueError):
    """The input is degenerate for this computation (e.g. zero vector)."""


class InfeasibleError(UnifiError):
    """Requested subsampling targets cannot be reached from this input."""


class EmptyClusterError(UnifiError, ValueError):
    """A cluster-level operation received an empty cluster."""


class NoPairsError(UnifiError):
    """No packet pairs fall within the coherence window; keep clusters separate."""


class DivByZeroError(UnifiError):
    """Every candidate alignment pair had a zero reference amplitude."""


class EmptyWindowError(UnifiError, ValueError):
    """The model received a window with no observations."""


class NonFiniteError(UnifiError, FloatingPointError):
    """Loss or gradients became non-finite.

    ``last_good`` carries the most recent finite parameter state (or None),
    ``history`` the epoch log up to the failure.
    """

    def __init__(self, message: str, last_good=None, history=None):
        self.last_good = last_good
        self.history = history if history is not None else []
        super().__init__(message)
