"""Ordering backends.

``MockBackend`` stands in for a topic-based consensus service: it assigns
gapless sequence numbers, strictly increasing nanosecond timestamps and a
running hash at submission, then releases each message after a sampled
latency.  Release times never decrease, so delivery order is submission
order.
"""
from __future__ import annotations

import asyncio
import collections
import itertools
import random
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import AsyncIterator, Deque, Dict, Optional, Tuple

from ..types import ConsensusProof
from .proof import GENESIS_RUNNING_HASH, running_hash_step

# 0.00051779 HBAR in tinybar (1 HBAR = 10**8 tinybar)
DEFAULT_FEE_PER_MESSAGE = 51779


class BackendUnavailable(RuntimeError):
    pass


class TopicNotFound(KeyError):
    pass


@dataclass
class Delivery:
    payload: bytes
    proof: ConsensusProof
    fee: int
    received_at_ns: int
    delivered_at_ns: int = 0


class LatencyModel:
    """Samples a delivery delay in seconds.

    ``kind`` is ``fixed`` (``ms``), ``uniform`` (``low_ms``, ``high_ms``) or
    ``normal`` (``mean_ms``, ``stddev_ms``, truncated at zero).
    """

    def __init__(self, kind: str = "fixed", seed: Optional[int] = None, **params: float):
        if kind not in ("fixed", "uniform", "normal"):
            raise ValueError(f"unknown latency model {kind!r}")
        self.kind = kind
        self.params = params
        self._rng = random.Random(seed)

    @classmethod
    def fixed(cls, ms: float) -> "LatencyModel":
        return cls("fixed", ms=ms)

    @classmethod
    def from_config(cls, cfg: Optional[dict]) -> "LatencyModel":
        if not cfg:
            return cls.fixed(0)
        cfg = dict(cfg)
        return cls(cfg.pop("kind", "fixed"), seed=cfg.pop("seed", None), **cfg)

    def sample(self) -> float:
        p = self.params
        if self.kind == "fixed":
            ms = p.get("ms", 0.0)
        elif self.kind == "uniform":
            ms = self._rng.uniform(p["low_ms"], p["high_ms"])
        else:
            ms = max(0.0, self._rng.gauss(p["mean_ms"], p["stddev_ms"]))
        return ms / 1000.0


class ConsensusBackend(ABC):
    @abstractmethod
    async def create_topic(self) -> str:
        ...

    async def ensure_topic(self, topic_id: str, last: Optional[ConsensusProof] = None) -> None:
        """Re-attach to a topic created in an earlier run; ``last`` is the newest persisted proof."""

    @abstractmethod
    async def submit(self, topic_id: str, payload: bytes) -> ConsensusProof:
        """Hand ``payload`` to the backend; returns the assigned proof (not yet delivered)."""

    @abstractmethod
    def deliveries(self, topic_id: str) -> AsyncIterator[Delivery]:
        """Final, ordered stream of delivered messages for ``topic_id``."""

    @abstractmethod
    def fee_quote(self, payload: bytes) -> int:
        ...

    async def close(self) -> None:
        pass


@dataclass
class _Topic:
    sequence: int = 0
    last_timestamp_ns: int = 0
    running_hash: bytes = GENESIS_RUNNING_HASH
    release_at: float = 0.0
    pending: Deque[Tuple[float, Delivery]] = field(default_factory=collections.deque)
    wakeup: Optional[asyncio.Event] = None


class MockBackend(ConsensusBackend):
    def __init__(self, latency: Optional[LatencyModel] = None, *, fee_per_message: int = DEFAULT_FEE_PER_MESSAGE,
                 fail_rate: float = 0.0, duplicate_rate: float = 0.0, seed: Optional[int] = None,
                 clock_ns=time.time_ns):
        self.latency = latency or LatencyModel.fixed(0)
        self.fee_per_message = fee_per_message
        self.fail_rate = fail_rate
        self.duplicate_rate = duplicate_rate
        self._rng = random.Random(seed)
        self._clock_ns = clock_ns
        self._topics: Dict[str, _Topic] = {}
        self._ids = itertools.count(1)

    def fee_quote(self, payload: bytes) -> int:
        return self.fee_per_message

    async def create_topic(self) -> str:
        return self.create_topic_sync()

    async def ensure_topic(self, topic_id: str, last: Optional[ConsensusProof] = None) -> None:
        fresh = topic_id not in self._topics
        self.create_topic_sync(topic_id)
        if fresh and last is not None:
            # the mock keeps no state of its own across restarts; continue where the log ends
            topic = self._topics[topic_id]
            topic.sequence = last.sequence_number
            topic.last_timestamp_ns = last.consensus_timestamp_ns
            topic.running_hash = last.running_hash

    def create_topic_sync(self, topic_id: Optional[str] = None) -> str:
        if topic_id is None:
            topic_id = f"0.0.{next(self._ids)}"
            while topic_id in self._topics:
                topic_id = f"0.0.{next(self._ids)}"
        self._topics.setdefault(topic_id, _Topic())
        return topic_id

    def _topic(self, topic_id: str) -> _Topic:
        try:
            return self._topics[topic_id]
        except KeyError:
            raise TopicNotFound(topic_id) from None

    def assign(self, topic_id: str, payload: bytes) -> ConsensusProof:
        """Order ``payload`` on ``topic_id`` and return its proof."""
        topic = self._topic(topic_id)
        topic.sequence += 1
        ts = max(self._clock_ns(), topic.last_timestamp_ns + 1)
        topic.last_timestamp_ns = ts
        topic.running_hash = running_hash_step(topic.running_hash, payload, topic.sequence, ts)
        return ConsensusProof(topic_id, topic.sequence, ts, topic.running_hash)

    async def submit(self, topic_id: str, payload: bytes) -> ConsensusProof:
        topic = self._topic(topic_id)
        if self.fail_rate and self._rng.random() < self.fail_rate:
            raise BackendUnavailable("mock backend rejected the submission")
        received = time.time_ns()
        proof = self.assign(topic_id, payload)
        loop_time = asyncio.get_running_loop().time()
        topic.release_at = max(topic.release_at, loop_time + self.latency.sample())
        delivery = Delivery(payload, proof, self.fee_per_message, received)
        topic.pending.append((topic.release_at, delivery))
        if self.duplicate_rate and self._rng.random() < self.duplicate_rate:
            topic.pending.append((topic.release_at, Delivery(payload, proof, self.fee_per_message, received)))
        if topic.wakeup is not None:
            topic.wakeup.set()
        return proof

    async def deliveries(self, topic_id: str) -> AsyncIterator[Delivery]:
        topic = self._topic(topic_id)
        if topic.wakeup is None:
            topic.wakeup = asyncio.Event()
        loop = asyncio.get_running_loop()
        while True:
            if not topic.pending:
                topic.wakeup.clear()
                await topic.wakeup.wait()
                continue
            release_at, delivery = topic.pending[0]
            delay = release_at - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
                continue
            topic.pending.popleft()
            delivery.delivered_at_ns = time.time_ns()
            yield delivery
