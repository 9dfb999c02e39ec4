"""Exception types shared across the platform."""


class RLStarError(Exception):
    """Base class for every error raised by this package."""


class ActionDimensionMismatch(RLStarError, ValueError):
    pass


class EpisodeFinished(RLStarError, RuntimeError):
    """Raised when ``step`` is called on an episode that already ended."""


class DimensionMismatch(RLStarError, ValueError):
    pass


class CacheMismatch(RLStarError, ValueError):
    """The activation cache does not belong to the network being differentiated."""


class ShapeMismatch(RLStarError, ValueError):
    pass


class LengthMismatch(RLStarError, ValueError):
    pass


class NonFiniteLoss(RLStarError, FloatingPointError):
    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class ConfigError(RLStarError, ValueError):
    pass


class CheckpointFormatError(RLStarError, ValueError):
    pass


class UnknownTask(ConfigError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else ""


class ConnectError(RLStarError, ConnectionError):
    pass


class ProtocolVersionMismatch(RLStarError):
    pass


class RemoteError(RLStarError):
    def __init__(self, code, message):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message
