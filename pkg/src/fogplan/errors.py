class FogplanError(Exception):
    """Base class for data/validation errors (CLI exit code 1)."""


class StructuralError(FogplanError):
    """Inputs whose shapes or references do not line up."""


class UnstableQueueError(FogplanError, ValueError):
    """Utilization at or above one: the queue has no stationary regime."""


class TraceFormatError(FogplanError):
    pass


class ConfigError(FogplanError):
    pass


class InstanceTooLargeError(FogplanError):
    pass
