import pytest
from eth_account import Account as EthAccount
from eth_utils import keccak as keccak_oracle, to_canonical_address
from hypothesis import given, settings
from hypothesis import strategies as st

from caaschain.primitives import InvalidSignature, PrivateKey, rlp
from caaschain.types import (
    EMPTY_TRIE_ROOT,
    Account,
    Block,
    BlockHeader,
    ConsensusProof,
    GasLimitBelowIntrinsic,
    Log,
    MalformedTransaction,
    Receipt,
    Transaction,
    contract_address,
    intrinsic_gas,
    receipts_root,
    transactions_root,
    validate_stateless,
)
from conftest import ALICE, CHAIN_ID, signed

# worked example published with the replay-protection proposal
EIP155_KEY = PrivateKey(bytes.fromhex("46" * 32))
EIP155_RAW = bytes.fromhex(
    "f86c098504a817c800825208943535353535353535353535353535353535353535880de0b6b3a76400008025a028ef61340b"
    "d939bc2195fe537567866003e1a15d3c71ff63e1590620aa636276a067cbe9d8997f761aecb703304b3800ccf555c9f3dc64"
    "214b297fb1966a3b6d83")


def test_eip155_vector():
    tx = Transaction(9, 20 * 10**9, 21000, b"\x35" * 20, 10**18).sign(EIP155_KEY, 1)
    assert tx.signing_hash(1).hex() == "daf5a779ae972f972197303d7b574746c7ef83eadac0f2791ad23db92e4c8e53"
    assert tx.encode() == EIP155_RAW
    decoded = Transaction.decode(EIP155_RAW)
    assert decoded == tx
    assert decoded.sender(1) == EIP155_KEY.address


@settings(max_examples=40, deadline=None)
@given(nonce=st.integers(0, 2**32), gas_price=st.integers(0, 10**12), gas=st.integers(21000, 10**7),
       value=st.integers(0, 10**24), data=st.binary(max_size=64), create=st.booleans())
def test_signing_matches_eth_account(nonce, gas_price, gas, value, data, create):
    to = None if create else b"\x12" * 20
    tx = Transaction(nonce, gas_price, gas, to, value, data).sign(ALICE, CHAIN_ID)
    body = {"nonce": nonce, "gasPrice": gas_price, "gas": gas, "value": value, "data": data, "chainId": CHAIN_ID}
    body["to"] = "0x" + to.hex() if to else ""
    oracle = EthAccount.sign_transaction(body, ALICE.secret)
    assert tx.encode() == bytes(oracle.raw_transaction)
    assert tx.hash == bytes(oracle.hash) == keccak_oracle(tx.encode())
    assert Transaction.decode(tx.encode()).sender(CHAIN_ID) == ALICE.address


def test_hash_sensitivity():
    a = signed(ALICE, 0, b"\x01" * 20, 5)
    b = signed(ALICE, 0, b"\x01" * 20, 5)
    c = signed(ALICE, 0, b"\x01" * 20, 6)
    assert a.hash == b.hash != c.hash


def test_intrinsic_gas():
    assert intrinsic_gas(Transaction(0, 1, 0, b"\x01" * 20, 0)) == 21000
    assert intrinsic_gas(Transaction(0, 1, 0, None, 0)) == 53000
    assert intrinsic_gas(Transaction(0, 1, 0, b"\x01" * 20, 0, b"\x00\xff")) == 21020


def test_validate_stateless():
    tx = signed(ALICE, 0, b"\x02" * 20, 1)
    assert validate_stateless(tx, CHAIN_ID) == ALICE.address
    with pytest.raises(GasLimitBelowIntrinsic):
        validate_stateless(signed(ALICE, 0, b"\x02" * 20, 1, gas=20999), CHAIN_ID)
    bad = Transaction(tx.nonce, tx.gas_price, tx.gas_limit, tx.to, tx.value, tx.data, tx.v, tx.r ^ 1, tx.s)
    with pytest.raises(InvalidSignature):
        validate_stateless(bad, CHAIN_ID)
    with pytest.raises(InvalidSignature):
        validate_stateless(tx, CHAIN_ID + 1)


def test_unprotected_legacy_accepted():
    tx = Transaction(0, 10**9, 21000, b"\x02" * 20, 1).sign(ALICE, None)
    assert tx.v in (27, 28)
    assert validate_stateless(tx, CHAIN_ID) == ALICE.address


@pytest.mark.parametrize("raw", [
    rlp.encode([b"\x01"] * 8),
    rlp.encode([b"\x00"] + [b""] * 8),
    rlp.encode([b"", b"", b"", b"\x01" * 19, b"", b"", b"", b"", b""]),
    b"\xc0\x00",
])
def test_malformed_transactions(raw):
    with pytest.raises(MalformedTransaction):
        Transaction.decode(raw)


def test_contract_address_rule():
    sender = bytes.fromhex("6ac7ea33f8831ea9dcc53393aaa88b25a785dbf0")
    assert contract_address(sender, 0) == to_canonical_address("0xcd234a471b72ba2f1ccf0a70fcaba648a5eecd8d")
    assert contract_address(sender, 1) == to_canonical_address("0x343c43a37d37dff08ae8c4a11544c718abb4fcf8")


def test_account_round_trip():
    empty = Account()
    assert empty.storage_root == EMPTY_TRIE_ROOT
    assert empty.code_hash == keccak_oracle(b"")
    acct = Account(3, 10**20, EMPTY_TRIE_ROOT, keccak_oracle(b"code"))
    assert Account.decode(acct.encode()) == acct


def test_log_topic_limit():
    with pytest.raises(ValueError):
        Log(b"\x01" * 20, tuple(b"\x00" * 32 for _ in range(5)), b"")


def test_receipt_and_block_round_trip():
    proof = ConsensusProof("0.0.1", 4, 1_700_000_000_000_000_000, b"\x09" * 32)
    logs = (Log(b"\x01" * 20, (b"\x02" * 32,), b"data"),)
    receipts = [
        Receipt(b"\x0a" * 32, 1, 21000, 21000, consensus_proof=proof, sender=ALICE.address, executed_at_ns=9),
        Receipt(b"\x0b" * 32, 0, 30000, 51000, logs, None, proof, fee_dlt=51779, transaction_index=1),
    ]
    for r in receipts:
        assert Receipt.decode(r.encode()) == r
    txs = (signed(ALICE, 0, b"\x01" * 20, 1), signed(ALICE, 1, None, 0, b"\x60\x00", gas=60000))
    header = BlockHeader(b"\x00" * 32, 1, 1700000000, EMPTY_TRIE_ROOT, transactions_root(txs), receipts_root(receipts))
    block = Block(header, txs)
    again = Block.decode(block.encode())
    assert again == block and again.hash == block.hash
    assert transactions_root(again.transactions) == header.transactions_root


def test_receipt_root_ignores_bookkeeping():
    base = Receipt(b"\x0a" * 32, 1, 21000, 21000)
    noisy = Receipt(b"\x0a" * 32, 1, 21000, 21000, executed_at_ns=123, fee_dlt=5, transaction_index=0)
    assert receipts_root([base]) == receipts_root([noisy])


def test_frozen_regression_hash():
    # frozen once from the signing routines above
    tx = Transaction(0, 10**9, 21000, b"\x22" * 20, 1000 * 10**18).sign(ALICE, CHAIN_ID)
    assert tx.hash.hex() == FROZEN_TRANSFER_HASH


FROZEN_TRANSFER_HASH = "005229601bfd567124ee98d94276262ceb95089f9b4f2c330eb00f1efe30207c"
