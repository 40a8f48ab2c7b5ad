"""Running-hash chain and the confirmation record pushed to nodes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

from ..primitives.crypto import keccak256
from ..types import ConsensusProof, from_hex, to_data

GENESIS_RUNNING_HASH = b"\x00" * 32


def running_hash_step(previous: bytes, payload: bytes, sequence_number: int, timestamp_ns: int) -> bytes:
    return keccak256(previous + payload + sequence_number.to_bytes(8, "big") + timestamp_ns.to_bytes(8, "big"))


def first_broken_link(links: Iterable[Tuple[bytes, ConsensusProof]]) -> Optional[int]:
    """Walk ``(payload, proof)`` pairs from sequence 1; return the first bad sequence number."""
    previous = GENESIS_RUNNING_HASH
    expected_seq = 1
    for payload, proof in links:
        if proof.sequence_number != expected_seq:
            return expected_seq
        previous = running_hash_step(previous, payload, proof.sequence_number, proof.consensus_timestamp_ns)
        if previous != proof.running_hash:
            return proof.sequence_number
        expected_seq += 1
    return None


@dataclass(frozen=True)
class Confirmation:
    tx_hash: bytes
    proof: ConsensusProof
    fee_dlt: int
    # present for in-process and pull deliveries; the HTTP callback omits it
    payload: Optional[bytes] = None

    def to_json(self) -> dict:
        return {
            "tx_hash": to_data(self.tx_hash),
            "topic_id": self.proof.topic_id,
            "sequence_number": self.proof.sequence_number,
            "consensus_timestamp_ns": self.proof.consensus_timestamp_ns,
            "running_hash": to_data(self.proof.running_hash),
            "fee_dlt": self.fee_dlt,
        }

    @classmethod
    def from_json(cls, body: dict) -> "Confirmation":
        proof = ConsensusProof(
            topic_id=str(body["topic_id"]),
            sequence_number=int(body["sequence_number"]),
            consensus_timestamp_ns=int(body["consensus_timestamp_ns"]),
            running_hash=from_hex(body["running_hash"]),
        )
        payload = body.get("payload")
        return cls(from_hex(body["tx_hash"]), proof, int(body["fee_dlt"]),
                   from_hex(payload) if payload else None)
