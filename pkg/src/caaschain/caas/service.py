"""Consensus-as-a-service: channels, message persistence, confirmation fan-out, audit."""
from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Awaitable, Callable, Dict, List, Optional, Union

from ..primitives import rlp
from ..primitives.crypto import keccak256
from ..primitives.rlp import decode_int
from ..state.kv import CAAS_MESSAGES, META, Batch, KvStore, MemoryStore, StoreFailure
from ..types import ConsensusProof, MalformedTransaction, Transaction
from .backend import BackendUnavailable, ConsensusBackend, Delivery
from .proof import GENESIS_RUNNING_HASH, Confirmation, first_broken_link, running_hash_step

log = logging.getLogger(__name__)

CAAS_INDEX = "caas-index"
CHANNELS_KEY = b"caas-channels"

# 0.00051779 HBAR was reported as 0.00000003 of the node token (1 token = 10**18 wei)
DEFAULT_WEI_PER_TINYBAR = Fraction(30_000_000_000, 51779)


class UnknownNetwork(KeyError):
    pass


class NotFound(KeyError):
    pass


class TamperDetected(RuntimeError):
    def __init__(self, sequence_number: int):
        super().__init__(f"running-hash chain broken at sequence {sequence_number}")
        self.sequence_number = sequence_number


class InvalidProof(RuntimeError):
    pass


@dataclass(frozen=True)
class MessageRecord:
    network_id: str
    tx_hash: bytes
    payload: bytes
    proof: ConsensusProof
    fee_dlt: int
    received_at_ns: int
    delivered_at_ns: int

    def encode(self) -> bytes:
        return rlp.encode([self.network_id.encode(), self.tx_hash, self.payload, self.proof.to_rlp(),
                           self.fee_dlt, self.received_at_ns, self.delivered_at_ns])

    @classmethod
    def decode(cls, raw: bytes) -> "MessageRecord":
        net, tx_hash, payload, proof, fee, received, delivered = rlp.decode(raw)
        return cls(net.decode(), tx_hash, payload, ConsensusProof.from_rlp(proof), decode_int(fee),
                   decode_int(received), decode_int(delivered))

    def confirmation(self, with_payload: bool = False) -> Confirmation:
        return Confirmation(self.tx_hash, self.proof, self.fee_dlt, self.payload if with_payload else None)


def message_key(topic_id: str, sequence_number: int) -> bytes:
    return topic_id.encode() + b"/" + sequence_number.to_bytes(8, "big")


Sink = Callable[[Confirmation], Awaitable[None]]


@dataclass
class Channel:
    network_id: str
    topic_id: str
    subscribers: List[Sink]
    last_sequence: int = 0
    last_running_hash: bytes = GENESIS_RUNNING_HASH
    task: Optional[asyncio.Task] = None


class ConsensusService:
    def __init__(self, backend: ConsensusBackend, store: Optional[KvStore] = None, *,
                 wei_per_fee_unit: Fraction = DEFAULT_WEI_PER_TINYBAR, retry_delay: float = 0.05):
        self.backend = backend
        self.store = store if store is not None else MemoryStore()
        self.wei_per_fee_unit = Fraction(wei_per_fee_unit)
        self.retry_delay = retry_delay
        self.channels: Dict[str, Channel] = {}
        self.total_fee_dlt = 0
        self.messages_persisted = 0
        self.duplicates_suppressed = 0

    # channel management

    async def register_network(self, network_id: str) -> Channel:
        if network_id in self.channels:
            return self.channels[network_id]
        known = self._known_channels()
        topic_id = known.get(network_id)
        last = None
        if topic_id is None:
            topic_id = await self.backend.create_topic()
            known[network_id] = topic_id
            self.store.put(META, CHANNELS_KEY, rlp.encode([[k.encode(), v.encode()] for k, v in sorted(known.items())]))
        else:
            last = self._last_record(topic_id)
            await self.backend.ensure_topic(topic_id, last.proof if last is not None else None)
        channel = Channel(network_id, topic_id, [])
        if last is not None:
            channel.last_sequence = last.proof.sequence_number
            channel.last_running_hash = last.proof.running_hash
        self.channels[network_id] = channel
        channel.task = asyncio.create_task(self._delivery_loop(channel), name=f"caas-{network_id}")
        return channel

    def _known_channels(self) -> Dict[str, str]:
        raw = self.store.get(META, CHANNELS_KEY)
        if not raw:
            return {}
        return {k.decode(): v.decode() for k, v in rlp.decode(raw)}

    def subscribe(self, network_id: str, sink: Sink) -> None:
        self._channel(network_id).subscribers.append(sink)

    def _channel(self, network_id: str) -> Channel:
        try:
            return self.channels[network_id]
        except KeyError:
            raise UnknownNetwork(network_id) from None

    async def close(self) -> None:
        for channel in self.channels.values():
            if channel.task is not None:
                channel.task.cancel()
        for channel in self.channels.values():
            if channel.task is not None:
                try:
                    await channel.task
                except (asyncio.CancelledError, Exception):
                    pass
        for channel in self.channels.values():
            for sink in channel.subscribers:
                closer = getattr(sink, "close", None)
                if closer is not None:
                    await closer()
        await self.backend.close()

    # ingress

    async def submit_transaction(self, network_id: str, raw_tx: bytes) -> bytes:
        channel = self._channel(network_id)
        Transaction.decode(raw_tx)
        tx_hash = keccak256(raw_tx)
        await self.backend.submit(channel.topic_id, raw_tx)
        return tx_hash

    # delivery side

    async def _delivery_loop(self, channel: Channel) -> None:
        async for delivery in self.backend.deliveries(channel.topic_id):
            while True:
                try:
                    record = self.persist(channel, delivery)
                    break
                except StoreFailure:
                    log.exception("persisting %s seq %d failed; retrying", channel.topic_id,
                                  delivery.proof.sequence_number)
                    await asyncio.sleep(self.retry_delay)
                except InvalidProof:
                    log.exception("dropping delivery with invalid proof on %s", channel.topic_id)
                    record = None
                    break
            if record is not None:
                await self._fan_out(channel, record)

    def persist(self, channel: Channel, delivery: Delivery) -> Optional[MessageRecord]:
        """Store a delivered message; returns None for an already-seen (topic, seq)."""
        proof = delivery.proof
        if proof.sequence_number <= channel.last_sequence:
            self.duplicates_suppressed += 1
            return None
        if proof.sequence_number != channel.last_sequence + 1:
            raise InvalidProof(f"sequence gap: expected {channel.last_sequence + 1}, got {proof.sequence_number}")
        expected = running_hash_step(channel.last_running_hash, delivery.payload, proof.sequence_number,
                                     proof.consensus_timestamp_ns)
        if expected != proof.running_hash:
            raise InvalidProof(f"running hash mismatch at {proof.sequence_number}")
        record = MessageRecord(channel.network_id, keccak256(delivery.payload), delivery.payload, proof,
                               delivery.fee, delivery.received_at_ns, delivery.delivered_at_ns or time.time_ns())
        batch = Batch()
        key = message_key(channel.topic_id, proof.sequence_number)
        batch.put(CAAS_MESSAGES, key, record.encode())
        batch.put(CAAS_INDEX, channel.network_id.encode() + b"/" + record.tx_hash, key)
        self.store.write(batch)
        channel.last_sequence = proof.sequence_number
        channel.last_running_hash = proof.running_hash
        self.total_fee_dlt += record.fee_dlt
        self.messages_persisted += 1
        return record

    async def _fan_out(self, channel: Channel, record: MessageRecord) -> None:
        confirmation = record.confirmation(with_payload=True)
        for sink in list(channel.subscribers):
            while True:
                try:
                    await sink(confirmation)
                    break
                except asyncio.CancelledError:
                    raise
                except Exception:
                    log.warning("confirmation %s seq %d to %r failed; retrying", channel.network_id,
                                record.proof.sequence_number, sink, exc_info=True)
                    await asyncio.sleep(self.retry_delay)

    # queries

    def _last_record(self, topic_id: str) -> Optional[MessageRecord]:
        last = None
        for _, raw in self.store.iterate(CAAS_MESSAGES, topic_id.encode() + b"/", topic_id.encode() + b"0"):
            last = raw
        return MessageRecord.decode(last) if last else None

    def records(self, network_id: str, after: int = 0) -> List[MessageRecord]:
        channel = self._channel(network_id)
        prefix = channel.topic_id.encode() + b"/"
        start = message_key(channel.topic_id, after + 1)
        return [MessageRecord.decode(raw) for _, raw in self.store.iterate(CAAS_MESSAGES, start, prefix[:-1] + b"0")]

    def confirmations_after(self, network_id: str, sequence_number: int) -> List[Confirmation]:
        return [r.confirmation(with_payload=True) for r in self.records(network_id, sequence_number)]

    def verify_topic(self, network_id: str, upto: Optional[int] = None) -> Optional[int]:
        """First sequence number whose running hash fails to recompute, or None."""
        links = []
        for record in self.records(network_id):
            if upto is not None and record.proof.sequence_number > upto:
                break
            links.append((record.payload, record.proof))
        return first_broken_link(links)

    def audit_fetch(self, network_id: str, tx_hash: bytes) -> MessageRecord:
        channel = self._channel(network_id)
        key = self.store.get(CAAS_INDEX, network_id.encode() + b"/" + tx_hash)
        if key is None:
            raise NotFound(tx_hash.hex())
        raw = self.store.get(CAAS_MESSAGES, key)
        if raw is None:
            raise NotFound(tx_hash.hex())
        record = MessageRecord.decode(raw)
        broken = self.verify_topic(network_id, record.proof.sequence_number)
        if broken is not None:
            raise TamperDetected(broken)
        if keccak256(record.payload) != tx_hash:
            raise TamperDetected(record.proof.sequence_number)
        return record

    def fee_in_wei(self, fee_dlt: int) -> int:
        return int(fee_dlt * self.wei_per_fee_unit)

    def message_count(self, network_id: Optional[str] = None) -> int:
        if network_id is None:
            return sum(c.last_sequence for c in self.channels.values())
        return self._channel(network_id).last_sequence
