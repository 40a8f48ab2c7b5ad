import os

import pytest
import rlp as rlp_oracle
from eth_keys import keys as eth_keys
from eth_utils import keccak as keccak_oracle
from hypothesis import given, settings
from hypothesis import strategies as st

from caaschain.primitives import InvalidSignature, MalformedRlp, PrivateKey, keccak256, recover_signer, rlp
from caaschain.primitives.crypto import SECP256K1_N

items = st.recursive(st.binary(max_size=80), lambda inner: st.lists(inner, max_size=6), max_leaves=30)


def test_rlp_examples():
    assert rlp.encode(b"\x42") == b"\x42"
    assert rlp.encode(b"") == b"\x80"
    assert rlp.encode([b"cat", b"dog"]) == bytes.fromhex("c88363617483646f67")
    assert rlp.decode(b"\x80") == b""
    assert rlp.decode(b"\x42") == b"\x42"


@pytest.mark.parametrize("raw", [
    b"\x00\x80",          # trailing byte
    b"\x81\x05",          # single low byte wrapped in a prefix
    b"\xb8\x05hello",     # long form for a short string
    b"\x83ab",            # truncated string
    b"\xc3\x80\x80",      # truncated list
    b"\xb9\x00\x40" + b"x" * 64,  # length with a leading zero
    b"",
])
def test_rlp_rejects_noncanonical(raw):
    with pytest.raises(MalformedRlp):
        rlp.decode(raw)


@given(items)
def test_rlp_matches_reference_library(item):
    encoded = rlp.encode(item)
    assert encoded == rlp_oracle.encode(item)
    assert rlp.decode(encoded) == item


@given(st.integers(min_value=0, max_value=2**256))
def test_rlp_integers(n):
    assert rlp.encode(n) == rlp_oracle.encode(n)
    assert rlp.decode_int(rlp.decode(rlp.encode(n))) == n


def test_keccak_vectors():
    assert keccak256(b"").hex() == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
    assert keccak256(b"abc").hex() == "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"


@given(st.binary(max_size=300))
def test_keccak_matches_reference(data):
    assert keccak256(data) == keccak_oracle(data)


@settings(max_examples=50)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_sign_recover_round_trip(secret, digest):
    n = int.from_bytes(secret, "big")
    if not 0 < n < SECP256K1_N:
        return
    key = PrivateKey(secret)
    assert key.address == eth_keys.PrivateKey(secret).public_key.to_canonical_address()
    rec, r, s = key.sign_hash(digest)
    assert recover_signer(digest, 27 + rec, r, s) == key.address
    assert recover_signer(digest, 35 + 2 * 5 + rec, r, s, 5) == key.address


def test_recover_rejections():
    key = PrivateKey(keccak256(b"k"))
    digest = keccak256(b"message")
    rec, r, s = key.sign_hash(digest)
    with pytest.raises(InvalidSignature):
        recover_signer(digest, 29, r, s)
    with pytest.raises(InvalidSignature):
        recover_signer(digest, 35 + 2 * 7 + rec, r, s, 8)
    # high-s twin of a valid signature is rejected to prevent malleability
    with pytest.raises(InvalidSignature):
        recover_signer(digest, 27 + (1 - rec), r, SECP256K1_N - s)
    with pytest.raises(InvalidSignature):
        recover_signer(digest, 27 + rec, 0, s)
    with pytest.raises(InvalidSignature):
        recover_signer(digest, 27 + rec, r, SECP256K1_N)


def test_random_keys_recover():
    for _ in range(20):
        key = PrivateKey(os.urandom(32))
        digest = os.urandom(32)
        rec, r, s = key.sign_hash(digest)
        assert r and s <= SECP256K1_N // 2
        assert recover_signer(digest, 27 + rec, r, s) == key.address
