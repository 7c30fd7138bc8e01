"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector length does not match what the operation requires."""


class ProtocolError(RuntimeError):
    """Secure-aggregation misuse: bad user ids, missing or duplicate inputs."""


class EstimateUndefined(ArithmeticError):
    """The wrapped-normal moment estimator has no finite solution (R_e^2 <= 0)."""


class DataError(ValueError):
    """Client data is unusable, e.g. empty."""


class ConfigError(ValueError):
    """Invalid experiment configuration. The message names the offending field."""


class IoError(OSError):
    """Failure writing experiment outputs."""
