"""Strict recursive-length-prefix encoding.

An item is either ``bytes`` or a list (or tuple) of items.  Decoding rejects
every non-canonical form so that a byte string has exactly one parse.
"""
from __future__ import annotations

from typing import List, Union

RlpItem = Union[bytes, List["RlpItem"]]


class MalformedRlp(ValueError):
    pass


def int_to_big_endian(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative integers have no RLP form")
    if value == 0:
        return b""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def big_endian_to_int(data: bytes) -> int:
    return int.from_bytes(data, "big")


def _length_prefix(length: int, offset: int) -> bytes:
    if length < 56:
        return bytes([offset + length])
    encoded = int_to_big_endian(length)
    return bytes([offset + 55 + len(encoded)]) + encoded


def encode(item) -> bytes:
    if isinstance(item, (bytes, bytearray, memoryview)):
        item = bytes(item)
        if len(item) == 1 and item[0] < 0x80:
            return item
        return _length_prefix(len(item), 0x80) + item
    if isinstance(item, int) and not isinstance(item, bool):
        return encode(int_to_big_endian(item))
    if isinstance(item, (list, tuple)):
        payload = b"".join(encode(x) for x in item)
        return _length_prefix(len(payload), 0xC0) + payload
    raise TypeError(f"cannot RLP-encode {type(item).__name__}")


def _decode_at(data: bytes, pos: int):
    """Return (item, next_pos) for the item starting at ``pos``."""
    end = len(data)
    if pos >= end:
        raise MalformedRlp("truncated input")
    prefix = data[pos]
    if prefix < 0x80:
        return data[pos:pos + 1], pos + 1
    if prefix < 0xB8:
        length = prefix - 0x80
        start = pos + 1
        if start + length > end:
            raise MalformedRlp("truncated string")
        if length == 1 and data[start] < 0x80:
            raise MalformedRlp("single byte below 0x80 must not be prefixed")
        return data[start:start + length], start + length
    if prefix < 0xC0:
        length, start = _long_length(data, pos, prefix - 0xB7)
        if start + length > end:
            raise MalformedRlp("truncated string")
        return data[start:start + length], start + length
    if prefix < 0xF8:
        length = prefix - 0xC0
        start = pos + 1
    else:
        length, start = _long_length(data, pos, prefix - 0xF7)
    stop = start + length
    if stop > end:
        raise MalformedRlp("truncated list")
    items = []
    cursor = start
    while cursor < stop:
        item, cursor = _decode_at(data, cursor)
        items.append(item)
    if cursor != stop:
        raise MalformedRlp("list payload overruns its declared length")
    return items, stop


def _long_length(data: bytes, pos: int, size: int):
    start = pos + 1
    if start + size > len(data):
        raise MalformedRlp("truncated length prefix")
    raw = data[start:start + size]
    if raw[0] == 0:
        raise MalformedRlp("length prefix has leading zero")
    length = big_endian_to_int(raw)
    if length < 56:
        raise MalformedRlp("long form used for short payload")
    return length, start + size


def decode(data: bytes) -> RlpItem:
    data = bytes(data)
    if not data:
        raise MalformedRlp("empty input")
    item, pos = _decode_at(data, 0)
    if pos != len(data):
        raise MalformedRlp(f"{len(data) - pos} trailing bytes")
    return item


def decode_int(data: bytes) -> int:
    """Decode a canonical big-endian scalar (no leading zeros)."""
    if not isinstance(data, bytes):
        raise MalformedRlp("expected a byte string scalar")
    if data[:1] == b"\x00":
        raise MalformedRlp("scalar has leading zero")
    return big_endian_to_int(data)
