"""Just enough of the contract ABI for static argument lists and strings."""
from __future__ import annotations

from typing import List, Sequence

from ..primitives.crypto import keccak256

WORD = 32


def selector(signature: str) -> bytes:
    return keccak256(signature.encode())[:4]


def event_topic(signature: str) -> bytes:
    return keccak256(signature.encode())


def encode_word(kind: str, value) -> bytes:
    if kind == "address":
        if len(value) != 20:
            raise ValueError("address must be 20 bytes")
        return b"\x00" * 12 + bytes(value)
    if kind == "bytes32":
        if len(value) != 32:
            raise ValueError("bytes32 must be 32 bytes")
        return bytes(value)
    if kind == "bool":
        return int(bool(value)).to_bytes(WORD, "big")
    if kind.startswith("uint"):
        if value < 0 or value >= 1 << 256:
            raise ValueError("uint out of range")
        return int(value).to_bytes(WORD, "big")
    raise ValueError(f"unsupported static type {kind}")


def decode_word(kind: str, word: bytes):
    if kind == "address":
        if any(word[:12]):
            raise ValueError("dirty address padding")
        return word[12:]
    if kind == "bytes32":
        return word
    if kind == "bool":
        return int.from_bytes(word, "big") != 0
    if kind.startswith("uint"):
        return int.from_bytes(word, "big")
    raise ValueError(f"unsupported static type {kind}")


def encode_args(kinds: Sequence[str], values: Sequence) -> bytes:
    if len(kinds) != len(values):
        raise ValueError("argument count mismatch")
    return b"".join(encode_word(k, v) for k, v in zip(kinds, values))


def decode_args(kinds: Sequence[str], data: bytes) -> List:
    if len(data) < WORD * len(kinds):
        raise ValueError("calldata too short")
    return [decode_word(k, data[i * WORD:(i + 1) * WORD]) for i, k in enumerate(kinds)]


def encode_string(value: str) -> bytes:
    raw = value.encode()
    padded = raw + b"\x00" * (-len(raw) % WORD)
    return encode_word("uint256", WORD) + encode_word("uint256", len(raw)) + padded


def decode_string(data: bytes) -> str:
    offset = int.from_bytes(data[:WORD], "big")
    length = int.from_bytes(data[offset:offset + WORD], "big")
    return data[offset + WORD:offset + WORD + length].decode()


def encode_call(signature: str, *values) -> bytes:
    kinds = signature[signature.index("(") + 1:-1]
    kinds = [k for k in kinds.split(",") if k]
    return selector(signature) + encode_args(kinds, values)
