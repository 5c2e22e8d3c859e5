"""Exception hierarchy shared by all modules."""


class SignalLabError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SignalLabError, ValueError):
    pass


class WhiteningError(SignalLabError, ValueError):
    pass


class DegenerateSubsetError(SignalLabError, ValueError):
    """Raised when a covariate subset has fewer than two members."""


class MomentError(SignalLabError, ValueError):
    pass


class DataError(SignalLabError, ValueError):
    pass


class SampleSizeError(SignalLabError, ValueError):
    pass


class SelectionError(SignalLabError, ValueError):
    pass


class ConfigError(SignalLabError, ValueError):
    pass


class IoError(SignalLabError, OSError):
    pass


class VerificationError(SignalLabError):
    pass
