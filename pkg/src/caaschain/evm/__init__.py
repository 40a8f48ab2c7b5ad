from .engine import BlockEnv, Engine
from .interpreter import (
    INVALID,
    OUT_OF_GAS,
    REVERT,
    SUCCESS,
    ExecutionContext,
    ExecutionOutcome,
    interpret,
)
from .natives import AddressCollision, NativeContract, NativeRegistry, Revert, reserved_address

__all__ = [
    "AddressCollision", "BlockEnv", "Engine", "ExecutionContext", "ExecutionOutcome", "INVALID",
    "NativeContract", "NativeRegistry", "OUT_OF_GAS", "REVERT", "Revert", "SUCCESS", "interpret",
    "reserved_address",
]
