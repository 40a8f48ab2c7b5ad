"""Contracts implemented in Python and mounted at reserved addresses.

Calls are addressed by the usual 4-byte selectors, meter a fixed gas cost
per method, and read/write ordinary account storage, so receipts and logs
look the same as for bytecode contracts.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..primitives.crypto import keccak256
from ..types import Log
from . import abi
from .interpreter import INVALID, OUT_OF_GAS, REVERT, SUCCESS, ExecutionOutcome

RESERVED_START = 0x1000
RESERVED_END = 0x10FF
# runtime code placed at native addresses so tools see a contract; never executed here
NATIVE_MARKER_CODE = b"\xfe"


class AddressCollision(ValueError):
    pass


class Revert(Exception):
    """Raised by a native method to revert with an ABI ``Error(string)`` payload."""


def reserved_address(offset: int) -> bytes:
    value = RESERVED_START + offset
    if not RESERVED_START <= value <= RESERVED_END:
        raise ValueError("offset outside the reserved native range")
    return value.to_bytes(20, "big")


def is_reserved(address: bytes) -> bool:
    return len(address) == 20 and RESERVED_START <= int.from_bytes(address, "big") <= RESERVED_END


def mapping_slot(key: bytes, index: int) -> int:
    """Storage slot of ``mapping[key]`` declared at ``index`` (Solidity layout)."""
    return int.from_bytes(keccak256(key.rjust(32, b"\x00") + index.to_bytes(32, "big")), "big")


def error_payload(message: str) -> bytes:
    return abi.selector("Error(string)") + abi.encode_string(message)


class NativeCall:
    """Per-call view handed to method bodies."""

    def __init__(self, registry: "NativeRegistry", host, address: bytes, caller: bytes, value: int, logs: List[Log]):
        self.registry = registry
        self.host = host
        self.address = address
        self.caller = caller
        self.value = value
        self.logs = logs

    def sload(self, slot: int) -> int:
        return self.host.get_storage(self.address, slot)

    def sstore(self, slot: int, value: int) -> None:
        self.host.set_storage(self.address, slot, value)

    def emit(self, topics: Sequence[bytes], data: bytes = b"") -> None:
        self.logs.append(Log(self.address, tuple(topics), data))

    def call(self, target: bytes, data: bytes) -> bytes:
        """Invoke another native contract with this contract as caller."""
        contract = self.registry.get(target)
        if contract is None:
            raise Revert("call to non-native address")
        inner = NativeCall(self.registry, self.host, target, self.address, 0, self.logs)
        return contract.dispatch(inner, data)[1]


Method = Callable[..., bytes]


class NativeContract:
    """Subclasses list ``methods`` as ``signature -> (handler name, fixed gas)``."""

    methods: Dict[str, Tuple[str, int]] = {}

    def __init__(self):
        self._table = {}
        for signature, (handler, gas) in self.methods.items():
            kinds = signature[signature.index("(") + 1:-1]
            kinds = [k for k in kinds.split(",") if k]
            self._table[abi.selector(signature)] = (getattr(self, handler), gas, kinds, signature)

    def gas_for(self, data: bytes) -> Optional[int]:
        entry = self._table.get(bytes(data[:4]))
        return entry[1] if entry else None

    def dispatch(self, call: NativeCall, data: bytes) -> Tuple[int, bytes]:
        entry = self._table.get(bytes(data[:4]))
        if entry is None:
            raise Revert("unknown selector")
        handler, gas, kinds, _ = entry
        try:
            args = abi.decode_args(kinds, data[4:])
        except ValueError as exc:
            raise Revert(f"bad calldata: {exc}") from exc
        return gas, handler(call, *args)

    def genesis_storage(self) -> Dict[int, int]:
        return {}


class NativeRegistry:
    def __init__(self):
        self._contracts: Dict[bytes, NativeContract] = {}

    def register(self, address: bytes, contract: NativeContract) -> None:
        if not is_reserved(address):
            raise ValueError(f"{address.hex()} is not in the reserved native range")
        if address in self._contracts:
            raise AddressCollision(address.hex())
        self._contracts[address] = contract

    def get(self, address: Optional[bytes]) -> Optional[NativeContract]:
        if address is None:
            return None
        return self._contracts.get(address)

    def __contains__(self, address) -> bool:
        return address in self._contracts

    def items(self):
        return self._contracts.items()

    def execute(self, host, address: bytes, caller: bytes, value: int, data: bytes, gas: int) -> ExecutionOutcome:
        contract = self._contracts[address]
        cost = contract.gas_for(data)
        if cost is None:
            return ExecutionOutcome(REVERT, 0, error_payload("unknown selector"), error="unknown selector")
        if cost > gas:
            return ExecutionOutcome(OUT_OF_GAS, gas, error="native method gas")
        if value:
            return ExecutionOutcome(REVERT, cost, error_payload("not payable"), error="not payable")
        logs: List[Log] = []
        call = NativeCall(self, host, address, caller, value, logs)
        try:
            _, output = contract.dispatch(call, data)
        except Revert as exc:
            return ExecutionOutcome(REVERT, cost, error_payload(str(exc)), error=str(exc))
        return ExecutionOutcome(SUCCESS, cost, output, tuple(logs))
