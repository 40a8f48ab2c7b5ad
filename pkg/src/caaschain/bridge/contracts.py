"""Native token and lock-and-mint bridge contracts."""
from __future__ import annotations

from typing import Dict, Mapping, Optional

from ..evm import abi
from ..evm.natives import NativeCall, NativeContract, Revert, mapping_slot

TRANSFER_TOPIC = abi.event_topic("Transfer(address,address,uint256)")
APPROVAL_TOPIC = abi.event_topic("Approval(address,address,uint256)")
DEPOSIT_TOPIC = abi.event_topic("Deposit(address,uint256)")
BURN_TOPIC = abi.event_topic("Burn(address,uint256)")
MINT_TOPIC = abi.event_topic("Mint(address,uint256)")
WITHDRAW_TOPIC = abi.event_topic("Withdraw(address,uint256)")

VIEW_GAS = 2000


def _topic_address(address: bytes) -> bytes:
    return address.rjust(32, b"\x00")


def _uint(value: int) -> bytes:
    return abi.encode_word("uint256", value)


class Token(NativeContract):
    """ERC-20 style token; only ``bridge`` may mint, burn or move funds on a holder's behalf."""

    TOTAL_SUPPLY = 0
    BALANCES = 1
    ALLOWANCES = 2

    methods = {
        "name()": ("name", VIEW_GAS),
        "symbol()": ("symbol", VIEW_GAS),
        "decimals()": ("decimals", VIEW_GAS),
        "totalSupply()": ("total_supply", VIEW_GAS),
        "balanceOf(address)": ("balance_of", VIEW_GAS),
        "allowance(address,address)": ("allowance", VIEW_GAS),
        "transfer(address,uint256)": ("transfer", 30000),
        "approve(address,uint256)": ("approve", 25000),
        "transferFrom(address,address,uint256)": ("transfer_from", 35000),
        "operatorTransfer(address,address,uint256)": ("operator_transfer", 35000),
        "mint(address,uint256)": ("mint", 35000),
        "burnFrom(address,uint256)": ("burn_from", 30000),
    }

    def __init__(self, name: str, symbol: str, *, bridge: Optional[bytes] = None,
                 initial_balances: Optional[Mapping[bytes, int]] = None, decimals: int = 18):
        super().__init__()
        self.token_name = name
        self.token_symbol = symbol
        self.token_decimals = decimals
        self.bridge = bridge
        self.initial_balances = dict(initial_balances or {})

    def genesis_storage(self) -> Dict[int, int]:
        slots = {mapping_slot(a, self.BALANCES): v for a, v in self.initial_balances.items() if v}
        slots[self.TOTAL_SUPPLY] = sum(self.initial_balances.values())
        return slots

    # helpers shared by methods

    def _balance(self, call: NativeCall, owner: bytes) -> int:
        return call.sload(mapping_slot(owner, self.BALANCES))

    def _move(self, call: NativeCall, src: bytes, dst: bytes, amount: int) -> None:
        have = self._balance(call, src)
        if have < amount:
            raise Revert("insufficient balance")
        call.sstore(mapping_slot(src, self.BALANCES), have - amount)
        call.sstore(mapping_slot(dst, self.BALANCES), self._balance(call, dst) + amount)
        call.emit([TRANSFER_TOPIC, _topic_address(src), _topic_address(dst)], _uint(amount))

    def _only_bridge(self, call: NativeCall) -> None:
        if self.bridge is None or call.caller != self.bridge:
            raise Revert("caller is not the bridge")

    # methods

    def name(self, call):
        return abi.encode_string(self.token_name)

    def symbol(self, call):
        return abi.encode_string(self.token_symbol)

    def decimals(self, call):
        return _uint(self.token_decimals)

    def total_supply(self, call):
        return _uint(call.sload(self.TOTAL_SUPPLY))

    def balance_of(self, call, owner):
        return _uint(self._balance(call, owner))

    def allowance(self, call, owner, spender):
        return _uint(call.sload(mapping_slot(spender, mapping_slot(owner, self.ALLOWANCES))))

    def transfer(self, call, to, amount):
        self._move(call, call.caller, to, amount)
        return _uint(1)

    def approve(self, call, spender, amount):
        call.sstore(mapping_slot(spender, mapping_slot(call.caller, self.ALLOWANCES)), amount)
        call.emit([APPROVAL_TOPIC, _topic_address(call.caller), _topic_address(spender)], _uint(amount))
        return _uint(1)

    def transfer_from(self, call, src, dst, amount):
        slot = mapping_slot(call.caller, mapping_slot(src, self.ALLOWANCES))
        allowed = call.sload(slot)
        if allowed < amount:
            raise Revert("allowance exceeded")
        call.sstore(slot, allowed - amount)
        self._move(call, src, dst, amount)
        return _uint(1)

    def operator_transfer(self, call, src, dst, amount):
        self._only_bridge(call)
        self._move(call, src, dst, amount)
        return _uint(1)

    def mint(self, call, to, amount):
        self._only_bridge(call)
        call.sstore(mapping_slot(to, self.BALANCES), self._balance(call, to) + amount)
        call.sstore(self.TOTAL_SUPPLY, call.sload(self.TOTAL_SUPPLY) + amount)
        call.emit([TRANSFER_TOPIC, _topic_address(b"\x00" * 20), _topic_address(to)], _uint(amount))
        return _uint(1)

    def burn_from(self, call, owner, amount):
        self._only_bridge(call)
        have = self._balance(call, owner)
        if have < amount:
            raise Revert("insufficient balance")
        call.sstore(mapping_slot(owner, self.BALANCES), have - amount)
        call.sstore(self.TOTAL_SUPPLY, call.sload(self.TOTAL_SUPPLY) - amount)
        call.emit([TRANSFER_TOPIC, _topic_address(owner), _topic_address(b"\x00" * 20)], _uint(amount))
        return _uint(1)


class _BridgeBase(NativeContract):
    PROCESSED = 2

    def __init__(self, token: bytes, relayer: bytes):
        super().__init__()
        self.token = token
        self.relayer = relayer

    def _only_relayer(self, call: NativeCall) -> None:
        if call.caller != self.relayer:
            raise Revert("caller is not the mediator")

    def _claim(self, call: NativeCall, event_id: bytes) -> None:
        slot = mapping_slot(event_id, self.PROCESSED)
        if call.sload(slot):
            raise Revert("event already relayed")
        call.sstore(slot, 1)

    def is_processed(self, call, event_id):
        return _uint(call.sload(mapping_slot(event_id, self.PROCESSED)))


class BridgeOrigin(_BridgeBase):
    """Lock-and-withdraw side: holds deposited tokens at its own address."""

    LOCKED_TOTAL = 0
    LOCKED_BY = 1

    methods = {
        "lock(address,uint256)": ("lock", 60000),
        "withdraw(address,uint256,bytes32)": ("withdraw", 60000),
        "lockedTotal()": ("locked_total", VIEW_GAS),
        "lockedBy(address)": ("locked_by", VIEW_GAS),
        "isProcessed(bytes32)": ("is_processed", VIEW_GAS),
    }

    def lock(self, call, receiver, amount):
        if amount == 0:
            raise Revert("zero amount")
        call.call(self.token, abi.encode_call("operatorTransfer(address,address,uint256)",
                                              call.caller, call.address, amount))
        call.sstore(self.LOCKED_TOTAL, call.sload(self.LOCKED_TOTAL) + amount)
        slot = mapping_slot(call.caller, self.LOCKED_BY)
        call.sstore(slot, call.sload(slot) + amount)
        call.emit([DEPOSIT_TOPIC, _topic_address(receiver)], _uint(amount))
        return b""

    def withdraw(self, call, receiver, amount, event_id):
        self._only_relayer(call)
        locked = call.sload(self.LOCKED_TOTAL)
        if amount > locked:
            raise Revert("insufficient locked funds")
        self._claim(call, event_id)
        call.call(self.token, abi.encode_call("transfer(address,uint256)", receiver, amount))
        call.sstore(self.LOCKED_TOTAL, locked - amount)
        call.emit([WITHDRAW_TOPIC, _topic_address(receiver)], _uint(amount))
        return b""

    def locked_total(self, call):
        return _uint(call.sload(self.LOCKED_TOTAL))

    def locked_by(self, call, owner):
        return _uint(call.sload(mapping_slot(owner, self.LOCKED_BY)))


class BridgeDest(_BridgeBase):
    """Burn-and-mint side: the only minter of its token."""

    MINTED_TOTAL = 0
    BURNED_TOTAL = 1

    methods = {
        "mint(address,uint256,bytes32)": ("mint", 60000),
        "burn(address,uint256)": ("burn", 50000),
        "mintedTotal()": ("minted_total", VIEW_GAS),
        "burnedTotal()": ("burned_total", VIEW_GAS),
        "isProcessed(bytes32)": ("is_processed", VIEW_GAS),
    }

    def mint(self, call, receiver, amount, event_id):
        self._only_relayer(call)
        if amount == 0:
            raise Revert("zero amount")
        self._claim(call, event_id)
        call.call(self.token, abi.encode_call("mint(address,uint256)", receiver, amount))
        call.sstore(self.MINTED_TOTAL, call.sload(self.MINTED_TOTAL) + amount)
        call.emit([MINT_TOPIC, _topic_address(receiver)], _uint(amount))
        return b""

    def burn(self, call, receiver, amount):
        if amount == 0:
            raise Revert("zero amount")
        call.call(self.token, abi.encode_call("burnFrom(address,uint256)", call.caller, amount))
        call.sstore(self.BURNED_TOTAL, call.sload(self.BURNED_TOTAL) + amount)
        call.emit([BURN_TOPIC, _topic_address(receiver)], _uint(amount))
        return b""

    def minted_total(self, call):
        return _uint(call.sload(self.MINTED_TOTAL))

    def burned_total(self, call):
        return _uint(call.sload(self.BURNED_TOTAL))


def _addr(value) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    from ..types import from_hex
    return from_hex(value)


def build_native(kind: str, params: Mapping) -> NativeContract:
    """Instantiate a native contract from config parameters (hex strings or bytes)."""
    if kind == "token":
        balances = params.get("initial_balances") or {}
        if isinstance(balances, list):
            balances = {e["address"]: e["balance"] for e in balances}
        bridge = params.get("bridge")
        return Token(params.get("name", "Token"), params.get("symbol", "TKN"),
                     bridge=_addr(bridge) if bridge else None,
                     initial_balances={_addr(a): int(v) for a, v in balances.items()},
                     decimals=int(params.get("decimals", 18)))
    if kind == "bridge-origin":
        return BridgeOrigin(_addr(params["token"]), _addr(params["relayer"]))
    if kind == "bridge-dest":
        return BridgeDest(_addr(params["token"]), _addr(params["relayer"]))
    raise ValueError(f"unknown native contract kind {kind!r}")
