"""Legacy transactions, receipts, logs, blocks and accounts."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

from .primitives import rlp
from .primitives.crypto import EMPTY_KECCAK, InvalidSignature, PrivateKey, keccak256, recover_signer
from .primitives.rlp import MalformedRlp, decode_int, int_to_big_endian

ZERO_HASH = b"\x00" * 32
ZERO_ADDRESS = b"\x00" * 20
# keccak256(rlp(b""))
EMPTY_TRIE_ROOT = bytes.fromhex("56e81f171bcc55a6ff8345e692c0f86e5b48e01b996cadc001622fb5e363b421")

TX_BASE_GAS = 21000
TX_CREATE_GAS = 32000
TX_DATA_ZERO_GAS = 4
TX_DATA_NONZERO_GAS = 16

GWEI = 10**9
ETHER = 10**18


class GasLimitBelowIntrinsic(ValueError):
    pass


class MalformedTransaction(ValueError):
    pass


def to_quantity(value: int) -> str:
    return hex(value)


def to_data(value: bytes) -> str:
    return "0x" + bytes(value).hex()


def from_hex(value: str) -> bytes:
    if not isinstance(value, str) or not value.startswith(("0x", "0X")):
        raise ValueError(f"expected 0x-prefixed hex, got {value!r}")
    body = value[2:]
    if len(body) % 2:
        body = "0" + body
    return bytes.fromhex(body)


def parse_quantity(value) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, str) or not value.startswith(("0x", "0X")) or len(value) < 3:
        raise ValueError(f"invalid quantity {value!r}")
    return int(value, 16)


def _address_field(raw) -> Optional[bytes]:
    if not isinstance(raw, bytes):
        raise MalformedTransaction("address field must be a byte string")
    if raw == b"":
        return None
    if len(raw) != 20:
        raise MalformedTransaction("address must be 20 bytes")
    return raw


@dataclass(frozen=True)
class Transaction:
    nonce: int
    gas_price: int
    gas_limit: int
    to: Optional[bytes]
    value: int
    data: bytes = b""
    v: int = 0
    r: int = 0
    s: int = 0

    @property
    def is_create(self) -> bool:
        return self.to is None

    def _fields(self) -> list:
        return [self.nonce, self.gas_price, self.gas_limit, self.to or b"", self.value, self.data]

    def encode(self) -> bytes:
        return rlp.encode(self._fields() + [self.v, self.r, self.s])

    @cached_property
    def hash(self) -> bytes:
        return keccak256(self.encode())

    @property
    def chain_id(self) -> Optional[int]:
        """Chain id committed to by an EIP-155 ``v``, or None when unprotected."""
        if self.v >= 35:
            return (self.v - 35) // 2
        return None

    def signing_hash(self, chain_id: Optional[int] = None) -> bytes:
        fields = self._fields()
        if chain_id is not None:
            fields += [chain_id, 0, 0]
        return keccak256(rlp.encode(fields))

    def sign(self, key: PrivateKey, chain_id: Optional[int] = None) -> "Transaction":
        rec, r, s = key.sign_hash(self.signing_hash(chain_id))
        v = rec + (35 + 2 * chain_id if chain_id is not None else 27)
        return replace(self, v=v, r=r, s=s)

    def sender(self, chain_id: Optional[int] = None) -> bytes:
        own = self.chain_id
        if own is not None and chain_id is not None and own != chain_id:
            raise InvalidSignature(f"signed for chain {own}, expected {chain_id}")
        return recover_signer(self.signing_hash(own), self.v, self.r, self.s, own)

    @classmethod
    def decode(cls, raw: bytes) -> "Transaction":
        try:
            item = rlp.decode(raw)
        except MalformedRlp as exc:
            raise MalformedTransaction(str(exc)) from exc
        if not isinstance(item, list) or len(item) != 9:
            raise MalformedTransaction("legacy transaction must be a 9-item list")
        try:
            nonce, gas_price, gas_limit = (decode_int(x) for x in item[:3])
            to = _address_field(item[3])
            value = decode_int(item[4])
            data = item[5]
            if not isinstance(data, bytes):
                raise MalformedTransaction("data must be a byte string")
            v, r, s = (decode_int(x) for x in item[6:])
        except MalformedRlp as exc:
            raise MalformedTransaction(str(exc)) from exc
        return cls(nonce, gas_price, gas_limit, to, value, data, v, r, s)


def intrinsic_gas(tx: Transaction) -> int:
    zeros = tx.data.count(0)
    gas = TX_BASE_GAS + TX_DATA_ZERO_GAS * zeros + TX_DATA_NONZERO_GAS * (len(tx.data) - zeros)
    if tx.is_create:
        gas += TX_CREATE_GAS
    return gas


def calldata_gas(data: bytes) -> int:
    zeros = data.count(0)
    return TX_DATA_ZERO_GAS * zeros + TX_DATA_NONZERO_GAS * (len(data) - zeros)


def validate_stateless(tx: Transaction, chain_id: Optional[int]) -> bytes:
    """Check signature and gas floor; return the sender address."""
    sender = tx.sender(chain_id)
    need = intrinsic_gas(tx)
    if tx.gas_limit < need:
        raise GasLimitBelowIntrinsic(f"gas limit {tx.gas_limit} below intrinsic {need}")
    return sender


def contract_address(sender: bytes, nonce: int) -> bytes:
    return keccak256(rlp.encode([sender, nonce]))[12:]


@dataclass(frozen=True)
class Account:
    nonce: int = 0
    balance: int = 0
    storage_root: bytes = EMPTY_TRIE_ROOT
    code_hash: bytes = EMPTY_KECCAK

    def encode(self) -> bytes:
        return rlp.encode([self.nonce, self.balance, self.storage_root, self.code_hash])

    @classmethod
    def decode(cls, raw: bytes) -> "Account":
        nonce, balance, storage_root, code_hash = rlp.decode(raw)
        return cls(decode_int(nonce), decode_int(balance), storage_root, code_hash)

    @property
    def is_empty(self) -> bool:
        return self == EMPTY_ACCOUNT


EMPTY_ACCOUNT = Account()


@dataclass(frozen=True)
class Log:
    address: bytes
    topics: Tuple[bytes, ...] = ()
    data: bytes = b""

    def __post_init__(self):
        if len(self.topics) > 4:
            raise ValueError("a log carries at most 4 topics")

    def to_rlp(self) -> list:
        return [self.address, list(self.topics), self.data]

    @classmethod
    def from_rlp(cls, item) -> "Log":
        address, topics, data = item
        return cls(address, tuple(topics), data)


@dataclass(frozen=True)
class ConsensusProof:
    topic_id: str
    sequence_number: int
    consensus_timestamp_ns: int
    running_hash: bytes

    def to_rlp(self) -> list:
        return [self.topic_id.encode(), self.sequence_number, self.consensus_timestamp_ns, self.running_hash]

    @classmethod
    def from_rlp(cls, item) -> "ConsensusProof":
        topic, seq, ts, rh = item
        return cls(topic.decode(), decode_int(seq), decode_int(ts), rh)

    def to_json(self) -> dict:
        return {
            "topicId": self.topic_id,
            "sequenceNumber": to_quantity(self.sequence_number),
            "consensusTimestampNs": to_quantity(self.consensus_timestamp_ns),
            "runningHash": to_data(self.running_hash),
        }


STATUS_FAILURE = 0
STATUS_SUCCESS = 1


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    status: int
    gas_used: int
    cumulative_gas_used: int
    logs: Tuple[Log, ...] = ()
    contract_address: Optional[bytes] = None
    consensus_proof: Optional[ConsensusProof] = None
    # location and bookkeeping; not committed to by the receipts root
    sender: bytes = ZERO_ADDRESS
    to: Optional[bytes] = None
    gas_price: int = 0
    transaction_index: int = 0
    executed_at_ns: int = 0
    fee_dlt: int = 0

    @property
    def succeeded(self) -> bool:
        return self.status == STATUS_SUCCESS

    def consensus_encoding(self) -> bytes:
        """What the receipts trie commits to: ``[status, cumulative_gas, logs]``."""
        return rlp.encode([self.status, self.cumulative_gas_used, [log.to_rlp() for log in self.logs]])

    def encode(self) -> bytes:
        proof = self.consensus_proof.to_rlp() if self.consensus_proof else []
        return rlp.encode([
            self.status, self.cumulative_gas_used, [log.to_rlp() for log in self.logs],
            self.tx_hash, self.gas_used, self.contract_address or b"", proof,
            self.sender, self.to or b"", self.gas_price, self.transaction_index,
            self.executed_at_ns, self.fee_dlt,
        ])

    @classmethod
    def decode(cls, raw: bytes) -> "Receipt":
        (status, cum, logs, tx_hash, gas_used, caddr, proof,
         sender, to, gas_price, index, executed_at, fee_dlt) = rlp.decode(raw)
        return cls(
            tx_hash=tx_hash,
            status=decode_int(status),
            gas_used=decode_int(gas_used),
            cumulative_gas_used=decode_int(cum),
            logs=tuple(Log.from_rlp(x) for x in logs),
            contract_address=caddr or None,
            consensus_proof=ConsensusProof.from_rlp(proof) if proof else None,
            sender=sender,
            to=to or None,
            gas_price=decode_int(gas_price),
            transaction_index=decode_int(index),
            executed_at_ns=decode_int(executed_at),
            fee_dlt=decode_int(fee_dlt),
        )


@dataclass(frozen=True)
class BlockHeader:
    parent_hash: bytes
    number: int
    timestamp: int
    state_root: bytes
    transactions_root: bytes
    receipts_root: bytes

    def encode(self) -> bytes:
        return rlp.encode([self.parent_hash, self.number, self.timestamp,
                           self.state_root, self.transactions_root, self.receipts_root])

    @property
    def hash(self) -> bytes:
        return keccak256(self.encode())

    @classmethod
    def decode(cls, raw: bytes) -> "BlockHeader":
        parent, number, ts, state_root, tx_root, rc_root = rlp.decode(raw)
        return cls(parent, decode_int(number), decode_int(ts), state_root, tx_root, rc_root)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: Tuple[Transaction, ...] = field(default_factory=tuple)

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def number(self) -> int:
        return self.header.number

    def encode(self) -> bytes:
        return rlp.encode([rlp.decode(self.header.encode()), [rlp.decode(t.encode()) for t in self.transactions]])

    @classmethod
    def decode(cls, raw: bytes) -> "Block":
        header, txs = rlp.decode(raw)
        return cls(BlockHeader.decode(rlp.encode(header)),
                   tuple(Transaction.decode(rlp.encode(t)) for t in txs))


def ordered_trie_root(values: Sequence[bytes]) -> bytes:
    """Root of a trie keyed by ``rlp(index)``, as used for tx and receipt tries."""
    from .state.trie import Trie

    trie = Trie()
    for i, value in enumerate(values):
        trie.put(rlp.encode(i), value)
    return trie.root


def transactions_root(txs: Sequence[Transaction]) -> bytes:
    return ordered_trie_root([tx.encode() for tx in txs])


def receipts_root(receipts: Sequence[Receipt]) -> bytes:
    return ordered_trie_root([r.consensus_encoding() for r in receipts])


__all__ = [
    "Account", "Block", "BlockHeader", "ConsensusProof", "EMPTY_ACCOUNT", "EMPTY_TRIE_ROOT",
    "GasLimitBelowIntrinsic", "InvalidSignature", "Log", "MalformedTransaction", "Receipt",
    "Transaction", "calldata_gas", "contract_address", "intrinsic_gas", "int_to_big_endian",
    "receipts_root", "transactions_root", "validate_stateless",
]
