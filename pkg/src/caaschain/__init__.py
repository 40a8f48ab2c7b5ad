"""An Ethereum-compatible execution node that outsources ordering and
finality to an external consensus service."""
from .caas import ConsensusService, MockBackend
from .node import Node, NodeConfig, replay
from .primitives import PrivateKey, keccak256
from .stack import BackgroundStack, Stack
from .types import Block, Receipt, Transaction

__version__ = "0.1.0"

__all__ = [
    "BackgroundStack", "Block", "ConsensusService", "MockBackend", "Node", "NodeConfig", "PrivateKey",
    "Receipt", "Stack", "Transaction", "keccak256", "replay",
]
