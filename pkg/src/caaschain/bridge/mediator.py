"""Relays bridge events between two chains over plain JSON-RPC.

Deposits seen on the origin bridge become ``mint`` calls on the destination
bridge; burns on the destination become ``withdraw`` calls on the origin.
Each event is recorded with its signed counterpart transaction before that
transaction is sent, so a restart re-sends the same bytes instead of signing
a second relay.  The bridge contracts refuse an event id they have seen.
"""
from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..evm import abi
from ..primitives import rlp
from ..primitives.crypto import PrivateKey, keccak256
from ..rpc.client import RpcCallError, RpcUnreachable
from ..state.kv import Batch, KvStore, MemoryStore
from ..types import Transaction, from_hex, parse_quantity, to_data, to_quantity
from .contracts import BURN_TOPIC, DEPOSIT_TOPIC

log = logging.getLogger(__name__)

MEDIATOR = "mediator"
RELAY_GAS = 200_000

SIGNED = "signed"
SUBMITTED = "submitted"
DONE = "done"
FAILED = "failed"


@dataclass
class ChainEndpoint:
    name: str
    rpc: object  # anything with ``async call(method, *params)``
    bridge: bytes
    chain_id: Optional[int] = None


@dataclass
class Relay:
    """A processed-set entry: one source event and its counterpart transaction."""

    key: bytes
    state: str
    raw_tx: bytes
    tx_hash: bytes
    target: str

    def encode(self) -> bytes:
        return rlp.encode([self.state.encode(), self.raw_tx, self.tx_hash, self.target.encode()])

    @classmethod
    def decode(cls, key: bytes, raw: bytes) -> "Relay":
        state, raw_tx, tx_hash, target = rlp.decode(raw)
        return cls(key, state.decode(), raw_tx, tx_hash, target.decode())


@dataclass(frozen=True)
class Direction:
    source: str
    target: str
    topic: bytes
    method: str


DIRECTIONS = (
    Direction("origin", "destination", DEPOSIT_TOPIC, "mint(address,uint256,bytes32)"),
    Direction("destination", "origin", BURN_TOPIC, "withdraw(address,uint256,bytes32)"),
)


def event_key(chain: str, tx_hash: bytes, log_index: int) -> bytes:
    return chain.encode() + b"/" + tx_hash + log_index.to_bytes(4, "big")


def event_id(key: bytes) -> bytes:
    """On-chain replay guard derived from (chain, tx_hash, log_index)."""
    return keccak256(key)


class Mediator:
    def __init__(self, origin: ChainEndpoint, destination: ChainEndpoint, key: PrivateKey, *,
                 store: Optional[KvStore] = None, confirmation_depth: int = 1, poll_interval: float = 1.0):
        if confirmation_depth < 1:
            raise ValueError("confirmation depth must be at least 1")
        self.chains = {"origin": origin, "destination": destination}
        self.key = key
        self.store = store if store is not None else MemoryStore()
        self.confirmation_depth = confirmation_depth
        self.poll_interval = poll_interval
        self.relays: Dict[bytes, Relay] = {}
        for k, raw in self.store.iterate(MEDIATOR, b"event/", b"event0"):
            relay = Relay.decode(k[len(b"event/"):], raw)
            self.relays[relay.key] = relay
        self.duplicates_skipped = 0
        self.alarms: List[str] = []
        self._nonces: Dict[str, int] = {}

    # persisted bookkeeping

    def cursor(self, chain: str) -> int:
        """Last block fully scanned on ``chain`` (-1 before the first scan)."""
        raw = self.store.get(MEDIATOR, b"cursor/" + chain.encode())
        return int.from_bytes(raw, "big") - 1 if raw else -1

    def _set_cursor(self, batch: Batch, chain: str, block: int) -> None:
        if block < self.cursor(chain):
            raise AssertionError("cursor would move backward")
        batch.put(MEDIATOR, b"cursor/" + chain.encode(), (block + 1).to_bytes(8, "big"))

    def _save(self, relay: Relay) -> None:
        self.store.put(MEDIATOR, b"event/" + relay.key, relay.encode())
        self.relays[relay.key] = relay

    def _stored_nonce(self, chain: str) -> int:
        raw = self.store.get(MEDIATOR, b"nonce/" + chain.encode())
        return int.from_bytes(raw, "big") if raw else 0

    async def _next_nonce(self, chain: str) -> int:
        if chain not in self._nonces:
            endpoint = self.chains[chain]
            on_chain = parse_quantity(await endpoint.rpc.call("eth_getTransactionCount",
                                                              to_data(self.key.address), "latest"))
            self._nonces[chain] = max(on_chain, self._stored_nonce(chain))
        return self._nonces[chain]

    async def _chain_id(self, endpoint: ChainEndpoint) -> int:
        if endpoint.chain_id is None:
            endpoint.chain_id = parse_quantity(await endpoint.rpc.call("eth_chainId"))
        return endpoint.chain_id

    # relaying

    async def handle_log(self, direction: Direction, entry: dict) -> Optional[Relay]:
        """Record and send the counterpart of one source log; duplicates are skipped."""
        key = event_key(direction.source, from_hex(entry["transactionHash"]), parse_quantity(entry["logIndex"]))
        if key in self.relays:
            self.duplicates_skipped += 1
            return None
        receiver = from_hex(entry["topics"][1])[-20:]
        amount = int.from_bytes(from_hex(entry["data"]), "big")
        target = self.chains[direction.target]
        gas_price = parse_quantity(await target.rpc.call("eth_gasPrice"))
        nonce = await self._next_nonce(direction.target)
        data = abi.encode_call(direction.method, receiver, amount, event_id(key))
        tx = Transaction(nonce, gas_price, RELAY_GAS, target.bridge, 0, data).sign(self.key, await self._chain_id(target))
        raw = tx.encode()
        relay = Relay(key, SIGNED, raw, keccak256(raw), direction.target)
        batch = Batch()
        batch.put(MEDIATOR, b"event/" + key, relay.encode())
        batch.put(MEDIATOR, b"nonce/" + direction.target.encode(), (nonce + 1).to_bytes(8, "big"))
        self.store.write(batch)
        self.relays[key] = relay
        self._nonces[direction.target] = nonce + 1
        await self._send(relay)
        return relay

    async def _send(self, relay: Relay) -> bool:
        endpoint = self.chains[relay.target]
        try:
            await endpoint.rpc.call("eth_sendRawTransaction", to_data(relay.raw_tx))
        except (RpcUnreachable, ConnectionError) as exc:
            log.warning("relay %s not delivered yet: %s", relay.tx_hash.hex(), exc)
            return False
        except RpcCallError as exc:
            log.warning("relay %s refused: %s", relay.tx_hash.hex(), exc)
            return False
        if relay.state == SIGNED:
            relay.state = SUBMITTED
            self._save(relay)
        return True

    async def scan(self, direction: Direction, from_block: Optional[int] = None) -> int:
        """Scan source blocks up to the confirmation depth; returns the number of new relays.

        Passing ``from_block`` rescans below the cursor; the processed set
        keeps that from relaying anything twice.
        """
        source = self.chains[direction.source]
        head = parse_quantity(await source.rpc.call("eth_blockNumber"))
        upto = head - self.confirmation_depth + 1
        cursor = self.cursor(direction.source)
        start = cursor + 1 if from_block is None else from_block
        if upto < start:
            return 0
        logs = await source.rpc.call("eth_getLogs", {
            "fromBlock": to_quantity(start), "toBlock": to_quantity(upto),
            "address": to_data(source.bridge), "topics": [to_data(direction.topic)],
        })
        logs.sort(key=lambda e: (parse_quantity(e["blockNumber"]), parse_quantity(e["logIndex"])))
        relayed = 0
        for entry in logs:
            if await self.handle_log(direction, entry) is not None:
                relayed += 1
        if upto > cursor:
            batch = Batch()
            self._set_cursor(batch, direction.source, upto)
            self.store.write(batch)
        return relayed

    async def settle(self) -> int:
        """Re-send unsent relays and mark executed ones; returns how many are still open."""
        open_count = 0
        for relay in list(self.relays.values()):
            if relay.state in (DONE, FAILED):
                continue
            if relay.state == SIGNED:
                await self._send(relay)
            endpoint = self.chains[relay.target]
            try:
                receipt = await endpoint.rpc.call("eth_getTransactionReceipt", to_data(relay.tx_hash))
            except (RpcUnreachable, ConnectionError):
                receipt = None
            if receipt is None:
                open_count += 1
                continue
            if parse_quantity(receipt["status"]) == 1:
                relay.state = DONE
            else:
                relay.state = FAILED
                message = f"relay {relay.tx_hash.hex()} for event {relay.key.hex()} failed on {relay.target}"
                self.alarms.append(message)
                log.error(message)
            self._save(relay)
        return open_count

    async def step(self) -> int:
        relayed = 0
        for direction in DIRECTIONS:
            try:
                relayed += await self.scan(direction)
            except (RpcUnreachable, ConnectionError) as exc:
                log.warning("scan of %s failed: %s", direction.source, exc)
        await self.settle()
        return relayed

    async def run(self, stop: Optional[asyncio.Event] = None) -> None:
        stop = stop or asyncio.Event()
        while not stop.is_set():
            await self.step()
            try:
                await asyncio.wait_for(stop.wait(), self.poll_interval)
            except asyncio.TimeoutError:
                pass

    def status(self) -> dict:
        counts: Dict[str, int] = {}
        for relay in self.relays.values():
            counts[relay.state] = counts.get(relay.state, 0) + 1
        return {
            "cursors": {name: self.cursor(name) for name in self.chains},
            "relays": counts,
            "nonces": {name: self._stored_nonce(name) for name in self.chains},
            "alarms": list(self.alarms),
        }

    def counterparts(self) -> Dict[bytes, Tuple[str, bytes]]:
        return {k: (r.target, r.tx_hash) for k, r in self.relays.items()}
