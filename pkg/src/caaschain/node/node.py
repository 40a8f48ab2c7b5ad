"""The executing node: ingest, consensus-ordered execution, block cutting, replay.

Ordering comes from confirmations alone.  Ingested transactions wait in a
hash-keyed index only so a confirmation can be paired with its payload; the
index is never scanned, reordered or re-broadcast.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Tuple

from ..caas.proof import GENESIS_RUNNING_HASH, Confirmation, running_hash_step
from ..evm.engine import BlockEnv, Engine
from ..evm.interpreter import ExecutionOutcome
from ..evm.natives import NativeRegistry
from ..primitives import rlp
from ..primitives.crypto import InvalidSignature, keccak256
from ..primitives.rlp import decode_int
from ..state.kv import BLOCKS, META, RECEIPTS, Batch, KvStore, MemoryStore, SqliteStore
from ..state.world import StateOverlay, WorldState
from ..types import (
    EMPTY_TRIE_ROOT,
    STATUS_FAILURE,
    ZERO_ADDRESS,
    ZERO_HASH,
    Block,
    BlockHeader,
    ConsensusProof,
    GasLimitBelowIntrinsic,
    Log,
    MalformedTransaction,
    Receipt,
    Transaction,
    receipts_root,
    transactions_root,
    validate_stateless,
)
from .config import NodeConfig

log = logging.getLogger(__name__)

STAGED = "staged"
PENDING = "pending"
JOURNAL = "journal"
UNKNOWN = "unknown-confirmations"
TX_LOCATION = "tx-location"

HEAD_KEY = b"head"
STATE_ROOT_KEY = b"state-root"
WATERMARK_KEY = b"watermark"


class GasPriceBelowFloor(ValueError):
    pass


class CaasUnreachable(ConnectionError):
    pass


class NodeHalted(RuntimeError):
    pass


class ProofDiscontinuity(RuntimeError):
    pass


class DivergenceDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class TxLocation:
    number: int
    index: int
    block_hash: bytes
    first_log_index: int
    raw_tx: bytes

    @property
    def hash(self) -> bytes:
        return self.block_hash


class CaasClient(Protocol):
    async def submit(self, network_id: str, raw_tx: bytes) -> bytes: ...

    async def fetch_after(self, network_id: str, sequence_number: int) -> List[Confirmation]: ...


def _u64(n: int) -> bytes:
    return n.to_bytes(8, "big")


@dataclass
class Watermark:
    topic_id: str = ""
    sequence_number: int = 0
    running_hash: bytes = GENESIS_RUNNING_HASH

    def encode(self) -> bytes:
        return rlp.encode([self.topic_id.encode(), self.sequence_number, self.running_hash])

    @classmethod
    def decode(cls, raw: bytes) -> "Watermark":
        topic, seq, rh = rlp.decode(raw)
        return cls(topic.decode(), decode_int(seq), rh)


@dataclass(frozen=True)
class JournalEntry:
    """One step of the node's history: a confirmation or a block cut."""

    kind: str  # "confirmation" or "cut"
    confirmation: Optional[Confirmation] = None
    executed: bool = False
    timestamp: int = 0

    def encode(self) -> bytes:
        if self.kind == "cut":
            return rlp.encode([b"cut", self.timestamp])
        c = self.confirmation
        return rlp.encode([b"confirmation", c.tx_hash, c.proof.to_rlp(), c.fee_dlt, c.payload or b"",
                           1 if self.executed else 0])

    @classmethod
    def decode(cls, raw: bytes) -> "JournalEntry":
        item = rlp.decode(raw)
        if item[0] == b"cut":
            return cls("cut", timestamp=decode_int(item[1]))
        _, tx_hash, proof, fee, payload, executed = item
        conf = Confirmation(tx_hash, ConsensusProof.from_rlp(proof), decode_int(fee), payload or None)
        return cls("confirmation", conf, executed=bool(decode_int(executed)))


def build_natives(specs) -> NativeRegistry:
    from ..bridge.contracts import build_native

    registry = NativeRegistry()
    for spec in specs:
        registry.register(spec.address, build_native(spec.kind, spec.params))
    return registry


class Node:
    def __init__(self, config: NodeConfig, store: Optional[KvStore] = None, *, caas: Optional[CaasClient] = None,
                 engine: Optional[Engine] = None, clock: Callable[[], float] = time.time,
                 execute_foreign: bool = False):
        self.config = config
        if store is None:
            store = SqliteStore.in_dir(config.data_dir) if config.data_dir else MemoryStore()
        self.store = store
        self.engine = engine if engine is not None else Engine(build_natives(config.natives))
        self.caas = caas
        self.clock = clock
        self.execute_foreign = execute_foreign
        self.halted = False
        self.halt_reason = ""
        self.on_executed: List[Callable[[Receipt], None]] = []
        self.execution_log: List[Tuple[int, int, bytes]] = []
        self._reorder: Dict[int, Confirmation] = {}
        self._block_cache: Dict[int, Block] = {}
        self._gap_since: Optional[float] = None
        if self.store.get(META, HEAD_KEY) is None:
            self._init_genesis()
        self._load()

    # startup

    def _init_genesis(self) -> None:
        ws = WorldState(self.store)
        overlay = StateOverlay(ws)
        for address, balance in self.config.genesis.items():
            overlay.set_balance(address, balance)
        changes = self.engine.genesis_changes(ws, overlay)
        batch = Batch()

        def finish(root: bytes, b: Batch) -> None:
            header = BlockHeader(ZERO_HASH, 0, self.config.genesis_timestamp, root, EMPTY_TRIE_ROOT, EMPTY_TRIE_ROOT)
            self._write_block(b, Block(header, ()))
            b.put(META, STATE_ROOT_KEY, root)
            b.put(META, WATERMARK_KEY, Watermark().encode())

        ws.commit(changes, batch, on_root=finish)

    def _load(self) -> None:
        head_number = int.from_bytes(self.store.get(META, HEAD_KEY), "big")
        self.head = self.get_block(head_number)
        self.genesis_hash = self.get_block(0).hash
        self.state = WorldState(self.store, self.store.get(META, STATE_ROOT_KEY))
        self.watermark = Watermark.decode(self.store.get(META, WATERMARK_KEY))
        self.staged: List[Tuple[Transaction, Receipt]] = []
        self._staged_index: Dict[bytes, int] = {}
        for _, raw in self.store.iterate(STAGED):
            raw_tx, raw_receipt = rlp.decode(raw)
            receipt = Receipt.decode(raw_receipt)
            self._staged_index[receipt.tx_hash] = len(self.staged)
            self.staged.append((Transaction.decode(raw_tx), receipt))
        self.pending: Dict[bytes, Tuple[bytes, bytes]] = {}
        for key, raw in self.store.iterate(PENDING):
            raw_tx, sender = rlp.decode(raw)
            self.pending[key] = (raw_tx, sender)
        last = None
        for key, _ in self.store.iterate(JOURNAL):
            last = key
        self._journal_next = int.from_bytes(last, "big") + 1 if last is not None else 0
        self.last_cut = float(self.head.header.timestamp) if self.head.number else self.clock()

    @property
    def state_root(self) -> bytes:
        return self.state.root

    @property
    def chain_id(self) -> int:
        return self.config.chain_id

    # ingress

    async def ingest(self, raw_tx: bytes) -> bytes:
        """Validate, index and forward to consensus; returns the hash before consensus."""
        if self.halted:
            raise NodeHalted(self.halt_reason)
        tx = Transaction.decode(raw_tx)
        tx_hash = keccak256(raw_tx)
        if tx_hash in self.pending or self.store.get(TX_LOCATION, tx_hash) is not None or self._staged_receipt(tx_hash):
            return tx_hash
        sender = validate_stateless(tx, self.config.chain_id)
        if tx.gas_price < self.config.gas_price_floor:
            raise GasPriceBelowFloor(f"gas price {tx.gas_price} below floor {self.config.gas_price_floor}")
        if self.caas is None:
            raise CaasUnreachable("no consensus service configured")
        self.pending[tx_hash] = (raw_tx, sender)
        self.store.put(PENDING, tx_hash, rlp.encode([raw_tx, sender]))
        try:
            acked = await self.caas.submit(self.config.network_id, raw_tx)
        except Exception as exc:
            if tx_hash in self.pending:
                del self.pending[tx_hash]
                self.store.delete(PENDING, tx_hash)
            raise CaasUnreachable(str(exc)) from exc
        if acked != tx_hash:
            log.warning("consensus service acknowledged %s for %s", acked.hex(), tx_hash.hex())
        return tx_hash

    # confirmations

    def on_confirmation(self, conf: Confirmation) -> int:
        """Accept a confirmation; returns how many confirmations were applied.

        Duplicates are ignored.  A confirmation ahead of the next expected
        sequence number is held until the gap closes; ``check_gaps`` halts
        the node if it does not close within ``gap_timeout``.
        """
        if self.halted:
            raise NodeHalted(self.halt_reason)
        wm = self.watermark
        if wm.topic_id and conf.proof.topic_id != wm.topic_id:
            raise ProofDiscontinuity(f"confirmation for topic {conf.proof.topic_id}, node follows {wm.topic_id}")
        seq = conf.proof.sequence_number
        if seq <= wm.sequence_number:
            return 0
        if seq > wm.sequence_number + 1:
            self._reorder.setdefault(seq, conf)
            if self._gap_since is None:
                self._gap_since = self.clock()
            return 0
        applied = 0
        self._apply(conf)
        applied += 1
        while self.watermark.sequence_number + 1 in self._reorder:
            self._apply(self._reorder.pop(self.watermark.sequence_number + 1))
            applied += 1
        self._gap_since = self.clock() if self._reorder else None
        return applied

    def check_gaps(self, now: Optional[float] = None) -> None:
        if self._gap_since is None:
            return
        now = self.clock() if now is None else now
        if now - self._gap_since >= self.config.gap_timeout:
            missing = self.watermark.sequence_number + 1
            self._halt(f"sequence gap: waiting for {missing}, holding {sorted(self._reorder)}")
            raise ProofDiscontinuity(self.halt_reason)

    def _halt(self, reason: str) -> None:
        self.halted = True
        self.halt_reason = reason
        log.error("node %s halted: %s", self.config.network_id, reason)

    def _resolve_payload(self, conf: Confirmation) -> Tuple[Optional[bytes], Optional[bytes]]:
        entry = self.pending.get(conf.tx_hash)
        if entry is not None:
            return entry
        if self.execute_foreign and conf.payload is not None:
            return conf.payload, None
        return None, None

    def _apply(self, conf: Confirmation, payload_override: Optional[Tuple[Optional[bytes], Optional[bytes]]] = None) -> None:
        proof = conf.proof
        payload, sender = payload_override if payload_override is not None else self._resolve_payload(conf)
        check = payload if payload is not None else conf.payload
        if check is not None:
            if keccak256(check) != conf.tx_hash:
                self._halt(f"payload does not hash to {conf.tx_hash.hex()}")
                raise ProofDiscontinuity(self.halt_reason)
            expect = running_hash_step(self.watermark.running_hash, check, proof.sequence_number,
                                       proof.consensus_timestamp_ns)
            if expect != proof.running_hash:
                self._halt(f"running hash mismatch at sequence {proof.sequence_number}")
                raise ProofDiscontinuity(self.halt_reason)
        new_wm = Watermark(proof.topic_id, proof.sequence_number, proof.running_hash)
        batch = Batch()
        batch.put(META, WATERMARK_KEY, new_wm.encode())

        if payload is None:
            log.warning("confirmation for unknown transaction %s (seq %d) recorded, not executed",
                        conf.tx_hash.hex(), proof.sequence_number)
            batch.put(UNKNOWN, conf.tx_hash, JournalEntry("confirmation", conf).encode())
            self._journal(batch, JournalEntry("confirmation", Confirmation(conf.tx_hash, proof, conf.fee_dlt), False))
            self.store.write(batch)
            self.watermark = new_wm
            self._journal_next += 1
            return

        tx, outcome, receipt = self._execute(payload, sender, conf)
        index = len(self.staged)
        batch.put(STAGED, _u64(index), rlp.encode([payload, receipt.encode()]))
        if conf.tx_hash in self.pending:
            batch.delete(PENDING, conf.tx_hash)
        self._journal(batch, JournalEntry("confirmation", Confirmation(conf.tx_hash, proof, conf.fee_dlt, payload), True))
        self.state.commit(outcome.state_delta, batch,
                          on_root=lambda root, b: b.put(META, STATE_ROOT_KEY, root))
        self.watermark = new_wm
        self._journal_next += 1
        self.pending.pop(conf.tx_hash, None)
        self._staged_index[receipt.tx_hash] = len(self.staged)
        self.staged.append((tx, receipt))
        self.execution_log.append((proof.consensus_timestamp_ns, proof.sequence_number, conf.tx_hash))
        for listener in self.on_executed:
            listener(receipt)

    def _execute(self, payload: bytes, sender: Optional[bytes], conf: Confirmation):
        from ..state.world import StateChanges

        env = BlockEnv(self.head.number + 1, conf.proof.consensus_timestamp_ns // 10**9, self.config.chain_id)
        cumulative = self.staged[-1][1].cumulative_gas_used if self.staged else 0
        index = len(self.staged)
        try:
            tx = Transaction.decode(payload)
            if sender is None:
                sender = validate_stateless(tx, self.config.chain_id)
        except (MalformedTransaction, InvalidSignature, GasLimitBelowIntrinsic) as exc:
            # consensus ordered it, so it still gets a (failed) receipt
            tx = _opaque_tx(payload)
            outcome = ExecutionOutcome("invalid", 0, error=str(exc), state_delta=StateChanges())
            receipt = Receipt(conf.tx_hash, STATUS_FAILURE, 0, cumulative, consensus_proof=conf.proof,
                              sender=sender or ZERO_ADDRESS, transaction_index=index)
        else:
            outcome, receipt = self.engine.execute_transaction(self.state, tx, sender, env,
                                                               cumulative_gas=cumulative, index=index,
                                                               proof=conf.proof)
        receipt = replace(receipt, tx_hash=conf.tx_hash, executed_at_ns=time.time_ns(), fee_dlt=conf.fee_dlt)
        return tx, outcome, receipt

    def _journal(self, batch: Batch, entry: JournalEntry) -> None:
        batch.put(JOURNAL, _u64(self._journal_next), entry.encode())

    async def resync(self) -> int:
        """Pull confirmations after the persisted watermark (used after restart)."""
        if self.caas is None:
            return 0
        confs = await self.caas.fetch_after(self.config.network_id, self.watermark.sequence_number)
        applied = 0
        for conf in confs:
            applied += self.on_confirmation(conf)
        return applied

    # blocks

    def cut_block(self, now: Optional[float] = None, *, force: bool = False) -> Optional[Block]:
        now = self.clock() if now is None else now
        if not self.staged:
            return None
        if not force and now - self.last_cut < self.config.block_interval:
            return None
        txs = tuple(tx for tx, _ in self.staged)
        receipts = [r for _, r in self.staged]
        header = BlockHeader(
            parent_hash=self.head.hash,
            number=self.head.number + 1,
            timestamp=max(int(now), self.head.header.timestamp),
            state_root=self.state.root,
            transactions_root=transactions_root(txs),
            receipts_root=receipts_root(receipts),
        )
        block = Block(header, txs)
        batch = Batch()
        self._write_block(batch, block)
        first_log = 0
        for i, receipt in enumerate(receipts):
            batch.put(RECEIPTS, receipt.tx_hash, receipt.encode())
            batch.put(TX_LOCATION, receipt.tx_hash,
                      rlp.encode([block.number, i, block.hash, first_log, txs[i].encode()]))
            batch.delete(STAGED, _u64(i))
            first_log += len(receipt.logs)
        batch.put(BLOCKS, b"r" + _u64(block.number), rlp.encode([r.encode() for r in receipts]))
        self._journal(batch, JournalEntry("cut", timestamp=header.timestamp))
        self.store.write(batch)
        self._journal_next += 1
        self.head = block
        self.staged = []
        self._staged_index = {}
        self.last_cut = now
        return block

    def _write_block(self, batch: Batch, block: Block) -> None:
        batch.put(BLOCKS, b"n" + _u64(block.number), block.encode())
        batch.put(BLOCKS, b"h" + block.hash, _u64(block.number))
        batch.put(META, HEAD_KEY, _u64(block.number))

    # reads

    def get_block(self, number: int) -> Optional[Block]:
        block = self._block_cache.get(number)
        if block is None:
            raw = self.store.get(BLOCKS, b"n" + _u64(number))
            if raw is None:
                return None
            block = Block.decode(raw)
            if len(self._block_cache) > 256:
                self._block_cache.clear()
            self._block_cache[number] = block
        return block

    def get_block_by_hash(self, block_hash: bytes) -> Optional[Block]:
        raw = self.store.get(BLOCKS, b"h" + block_hash)
        return self.get_block(int.from_bytes(raw, "big")) if raw else None

    def _staged_receipt(self, tx_hash: bytes) -> Optional[Receipt]:
        index = self._staged_index.get(tx_hash)
        return self.staged[index][1] if index is not None else None

    def _location(self, tx_hash: bytes) -> Optional[TxLocation]:
        raw = self.store.get(TX_LOCATION, tx_hash)
        if raw is None:
            return None
        number, index, block_hash, first_log, raw_tx = rlp.decode(raw)
        return TxLocation(decode_int(number), decode_int(index), block_hash, decode_int(first_log), raw_tx)

    def get_receipt(self, tx_hash: bytes) -> Optional[Tuple[Receipt, Optional[TxLocation]]]:
        """Receipt and where it landed; the location is None while the tx awaits the next cut."""
        loc = self._location(tx_hash)
        if loc is not None:
            return Receipt.decode(self.store.get(RECEIPTS, tx_hash)), loc
        receipt = self._staged_receipt(tx_hash)
        if receipt is not None:
            return receipt, None
        return None

    def get_transaction(self, tx_hash: bytes) -> Optional[Tuple[Transaction, Optional[TxLocation], Optional[int]]]:
        loc = self._location(tx_hash)
        if loc is not None:
            return Transaction.decode(loc.raw_tx), loc, loc.index
        index = self._staged_index.get(tx_hash)
        if index is not None:
            return self.staged[index][0], None, index
        entry = self.pending.get(tx_hash)
        if entry is not None:
            return Transaction.decode(entry[0]), None, None
        return None

    def block_receipts(self, block: Block) -> List[Receipt]:
        raw = self.store.get(BLOCKS, b"r" + _u64(block.number))
        return [Receipt.decode(r) for r in rlp.decode(raw)] if raw else []

    def unknown_confirmations(self) -> List[Confirmation]:
        """Confirmations for hashes this node never ingested (kept for audit)."""
        return [JournalEntry.decode(raw).confirmation for _, raw in self.store.iterate(UNKNOWN)]

    def journal(self) -> List[JournalEntry]:
        return [JournalEntry.decode(raw) for _, raw in self.store.iterate(JOURNAL)]

    def blocks(self) -> Iterable[Block]:
        for n in range(self.head.number + 1):
            yield self.get_block(n)

    def state_at(self, number: Optional[int] = None) -> WorldState:
        if number is None:
            return self.state.at(self.state.root)
        return self.state.at(self.get_block(number).header.state_root)

    def call(self, sender: bytes, to: Optional[bytes], data: bytes, value: int = 0, gas: int = 10_000_000,
             number: Optional[int] = None) -> ExecutionOutcome:
        env = BlockEnv(self.head.number + 1, int(self.clock()), self.config.chain_id)
        return self.engine.call(self.state_at(number), sender or ZERO_ADDRESS, to, data, value, gas, env)

    def close(self) -> None:
        self.store.close()


def _opaque_tx(payload: bytes) -> Transaction:
    """Stand-in for an undecodable payload so it can still sit in a block."""
    try:
        return Transaction.decode(payload)
    except MalformedTransaction:
        return Transaction(0, 0, 0, None, 0, payload)


def replay(config: NodeConfig, journal: Iterable[JournalEntry], *, expected_blocks: Optional[Dict[int, bytes]] = None,
           expected_root: Optional[bytes] = None, store: Optional[KvStore] = None) -> Node:
    """Re-execute a journal from genesis on a fresh store and check every root against expectations."""
    node = Node(config, store if store is not None else MemoryStore(), clock=lambda: 0.0)
    for entry in journal:
        if entry.kind == "cut":
            block = node.cut_block(entry.timestamp, force=True)
            if block is None:
                raise DivergenceDetected("journal cuts a block with nothing staged")
            if expected_blocks is not None and expected_blocks.get(block.number) != block.hash:
                raise DivergenceDetected(f"block {block.number} hash mismatch")
            continue
        conf = entry.confirmation
        if entry.executed:
            if conf.payload is None or keccak256(conf.payload) != conf.tx_hash:
                raise DivergenceDetected(f"payload for {conf.tx_hash.hex()} does not match its hash")
            try:
                node._apply(conf, (conf.payload, None))
            except ProofDiscontinuity as exc:
                raise DivergenceDetected(str(exc)) from exc
        else:
            node._apply(conf, (None, None))
    if expected_root is not None and node.state_root != expected_root:
        raise DivergenceDetected("head state root mismatch")
    return node
