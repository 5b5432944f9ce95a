"""Exception types raised by the inference engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid configuration (bad slot count, mismatched plan, ...)."""


class CapacityError(EngineError):
    """Payload does not fit into the available slots."""


class ShapeError(EngineError):
    """Operand shapes are incompatible."""


class DepthExhausted(EngineError):
    """A multiplication was requested on a ciphertext with no levels left.

    ``block`` carries the label of the network block being executed when
    the budget ran out, if known.
    """

    def __init__(self, message, block=None):
        if block is not None:
            message = f"[{block}] {message}"
        super().__init__(message)
        self.block = block


class NumericalError(EngineError):
    """Numerically invalid parameter (e.g. non-positive BN variance)."""


class DegenerateInput(EngineError):
    """Metric undefined for this input (e.g. zero target variance)."""
