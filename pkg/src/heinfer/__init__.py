"""Homomorphic-SIMD inference engine on a simulated CKKS slot VM."""

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateInput,
    DepthExhausted,
    EngineError,
    NumericalError,
    ShapeError,
)
from .slotvm import Ciphertext, CostLedger, OpCounts, SlotVector, SlotVm, VmConfig, encode

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "Ciphertext",
    "ConfigError",
    "CostLedger",
    "DegenerateInput",
    "DepthExhausted",
    "EngineError",
    "NumericalError",
    "OpCounts",
    "ShapeError",
    "SlotVector",
    "SlotVm",
    "VmConfig",
    "encode",
]
