"""Keccak-256 and secp256k1 signer recovery for legacy transactions."""
from __future__ import annotations

from typing import Optional, Tuple

import coincurve
from Crypto.Hash import keccak as _keccak

SECP256K1_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
SECP256K1_HALF_N = SECP256K1_N // 2

EMPTY_KECCAK = bytes.fromhex("c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470")


class InvalidSignature(ValueError):
    pass


def keccak256(data: bytes) -> bytes:
    h = _keccak.new(digest_bits=256)
    h.update(data)
    return h.digest()


def public_key_to_address(public_key: bytes) -> bytes:
    """``public_key`` is the 64-byte uncompressed point without the 0x04 tag."""
    if len(public_key) == 65:
        public_key = public_key[1:]
    if len(public_key) != 64:
        raise ValueError("expected a 64-byte uncompressed public key")
    return keccak256(public_key)[12:]


class PrivateKey:
    """Thin wrapper so callers never touch the backend library directly."""

    def __init__(self, secret: bytes):
        if len(secret) != 32:
            raise ValueError("private key must be 32 bytes")
        self._key = coincurve.PrivateKey(secret)
        self.secret = secret
        self.public_key = self._key.public_key.format(compressed=False)[1:]
        self.address = public_key_to_address(self.public_key)

    @classmethod
    def from_int(cls, value: int) -> "PrivateKey":
        return cls(value.to_bytes(32, "big"))

    def sign_hash(self, digest: bytes) -> Tuple[int, int, int]:
        """Return ``(recovery_id, r, s)``; libsecp256k1 always emits low-s."""
        sig = self._key.sign_recoverable(digest, hasher=None)
        r = int.from_bytes(sig[:32], "big")
        s = int.from_bytes(sig[32:64], "big")
        return sig[64], r, s


def recovery_id_from_v(v: int, chain_id: Optional[int]) -> int:
    if v in (27, 28):
        return v - 27
    if chain_id is not None and v in (35 + 2 * chain_id, 36 + 2 * chain_id):
        return v - 35 - 2 * chain_id
    raise InvalidSignature(f"v={v} is outside the accepted legacy set")


def recover_public_key(digest: bytes, recovery_id: int, r: int, s: int) -> bytes:
    if not (1 <= r < SECP256K1_N and 1 <= s < SECP256K1_N):
        raise InvalidSignature("signature scalar out of range")
    if s > SECP256K1_HALF_N:
        raise InvalidSignature("high-s signature rejected")
    if recovery_id not in (0, 1):
        raise InvalidSignature("bad recovery id")
    sig = r.to_bytes(32, "big") + s.to_bytes(32, "big") + bytes([recovery_id])
    try:
        pub = coincurve.PublicKey.from_signature_and_message(sig, digest, hasher=None)
    except Exception as exc:
        raise InvalidSignature("public key recovery failed") from exc
    return pub.format(compressed=False)[1:]


def recover_signer(digest: bytes, v: int, r: int, s: int, chain_id: Optional[int] = None) -> bytes:
    if len(digest) != 32:
        raise InvalidSignature("signing hash must be 32 bytes")
    rec = recovery_id_from_v(v, chain_id)
    return public_key_to_address(recover_public_key(digest, rec, r, s))
