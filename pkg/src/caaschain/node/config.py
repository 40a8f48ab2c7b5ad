"""Node configuration, loadable from a JSON document."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

from ..types import GWEI, from_hex


@dataclass
class NativeSpec:
    """A native contract mounted at genesis; ``kind`` is token, bridge-origin or bridge-dest."""

    kind: str
    address: bytes
    params: dict = field(default_factory=dict)


@dataclass
class NodeConfig:
    chain_id: int = 1337
    network_id: str = "net-1"
    gas_price_floor: int = GWEI
    block_interval: float = 10.0
    genesis: Dict[bytes, int] = field(default_factory=dict)
    genesis_timestamp: int = 0
    token_name: str = "Native Token"
    token_symbol: str = "NAT"
    caas_url: Optional[str] = None
    confirmation_host: str = "127.0.0.1"
    confirmation_port: int = 0
    data_dir: Optional[str] = None
    rpc_port: int = 0
    natives: List[NativeSpec] = field(default_factory=list)
    # seconds an out-of-order confirmation may wait for the missing sequence numbers
    gap_timeout: float = 5.0

    def __post_init__(self):
        if self.block_interval <= 0:
            raise ValueError("block interval must be positive")
        if self.chain_id <= 0:
            raise ValueError("chain id must be positive")
        if any(v < 0 for v in self.genesis.values()):
            raise ValueError("genesis allocations must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "NodeConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "genesis" in doc:
            doc["genesis"] = {from_hex(e["address"]): int(e["balance"]) for e in doc["genesis"]}
        if "natives" in doc:
            doc["natives"] = [NativeSpec(n["kind"], from_hex(n["address"]), n.get("params", {}))
                              for n in doc["natives"]]
        return cls(**doc)

    @classmethod
    def load(cls, path: str) -> "NodeConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
