import random

import pytest

from caaschain.caas import Confirmation, MockBackend
from caaschain.node import (
    CaasUnreachable,
    DivergenceDetected,
    GasPriceBelowFloor,
    Node,
    NodeHalted,
    ProofDiscontinuity,
    replay,
)
from caaschain.primitives import keccak256
from caaschain.state import MemoryStore, SqliteStore
from caaschain.types import ETHER, GWEI, GasLimitBelowIntrinsic, InvalidSignature, receipts_root, transactions_root
from conftest import ALICE, BOB, CAROL, arun, config, signed, spawn, wait_until


class FakeCaas:
    """Records submissions; confirmations are produced on demand in any order."""

    def __init__(self):
        self.backend = MockBackend()
        self.topic = self.backend.create_topic_sync()
        self.submitted = []
        self.log = []
        self.down = False

    async def submit(self, network_id, raw):
        if self.down:
            raise ConnectionError("consensus service down")
        self.submitted.append(raw)
        return keccak256(raw)

    def order(self, raw_txs):
        out = []
        for raw in raw_txs:
            proof = self.backend.assign(self.topic, raw)
            out.append(Confirmation(keccak256(raw), proof, 51779, raw))
        self.log += out
        return out

    async def fetch_after(self, network_id, seq):
        return [c for c in self.log if c.proof.sequence_number > seq]


class Clock:
    def __init__(self, t=1_000.0):
        self.t = t

    def __call__(self):
        return self.t


def make_node(store=None, clock=None, **kw):
    caas = kw.pop("caas", None) or FakeCaas()
    node = Node(config(**kw), store, caas=caas, clock=clock or Clock())
    return node, caas


def transfers(n, key=ALICE, to=b"\x0c" * 20, start=0):
    return [signed(key, start + i, to, 1 + i).encode() for i in range(n)]


def test_genesis():
    node, _ = make_node()
    assert node.head.number == 0 and node.head.header.parent_hash == b"\x00" * 32
    assert node.state.get_balance(ALICE.address) == 1000 * ETHER
    assert node.cut_block(force=True) is None


def test_ingest_confirm_execute():
    node, caas = make_node()
    raw = signed(ALICE, 0, BOB.address, 5 * ETHER).encode()
    tx_hash = arun(node.ingest(raw))
    assert tx_hash == keccak256(raw) and caas.submitted == [raw]
    assert node.get_receipt(tx_hash) is None
    [conf] = caas.order([raw])
    assert node.on_confirmation(conf) == 1
    receipt, where = node.get_receipt(tx_hash)
    assert receipt.status == 1 and where is None and receipt.consensus_proof == conf.proof
    assert node.state.get_balance(BOB.address) == 1005 * ETHER
    assert tx_hash not in node.pending


def test_ingest_is_idempotent():
    node, caas = make_node()
    raw = transfers(1)[0]
    arun(node.ingest(raw))
    arun(node.ingest(raw))
    assert caas.submitted == [raw]


def test_ingest_rejections():
    node, caas = make_node()
    with pytest.raises(GasPriceBelowFloor):
        arun(node.ingest(signed(ALICE, 0, BOB.address, 1, gas_price=GWEI - 1).encode()))
    with pytest.raises(GasLimitBelowIntrinsic):
        arun(node.ingest(signed(ALICE, 0, BOB.address, 1, gas=20999).encode()))
    with pytest.raises(InvalidSignature):
        arun(node.ingest(signed(ALICE, 0, BOB.address, 1, chain_id=1).encode()))
    caas.down = True
    raw = transfers(1)[0]
    with pytest.raises(CaasUnreachable):
        arun(node.ingest(raw))
    assert keccak256(raw) not in node.pending
    assert caas.submitted == []


def test_out_of_order_confirmations_execute_in_sequence():
    node, caas = make_node()
    raws = transfers(6)
    for raw in raws:
        arun(node.ingest(raw))
    confs = caas.order(raws)
    shuffled = confs[:]
    random.Random(4).shuffle(shuffled)
    for conf in shuffled:
        node.on_confirmation(conf)
    assert [seq for _, seq, _ in node.execution_log] == [1, 2, 3, 4, 5, 6]
    keyed = sorted(node.execution_log)
    assert keyed == node.execution_log
    assert all(node.get_receipt(keccak256(r))[0].status == 1 for r in raws)


def test_duplicate_confirmation_ignored():
    node, caas = make_node()
    raw = transfers(1)[0]
    arun(node.ingest(raw))
    [conf] = caas.order([raw])
    assert node.on_confirmation(conf) == 1
    assert node.on_confirmation(conf) == 0
    assert len(node.staged) == 1


def test_sequence_gap_halts():
    clock = Clock()
    node, caas = make_node(clock=clock, gap_timeout=5.0)
    raws = transfers(7)
    for raw in raws:
        arun(node.ingest(raw))
    confs = caas.order(raws)
    for conf in confs[:5]:
        node.on_confirmation(conf)
    node.on_confirmation(confs[6])
    assert len(node.staged) == 5
    clock.t += 1
    node.check_gaps()
    clock.t += 5
    with pytest.raises(ProofDiscontinuity):
        node.check_gaps()
    assert node.halted and len(node.staged) == 5
    with pytest.raises(NodeHalted):
        arun(node.ingest(transfers(1, key=BOB)[0]))


def test_forged_running_hash_halts():
    node, caas = make_node()
    raw = transfers(1)[0]
    arun(node.ingest(raw))
    [conf] = caas.order([raw])
    forged = Confirmation(conf.tx_hash, type(conf.proof)(conf.proof.topic_id, 1, conf.proof.consensus_timestamp_ns,
                                                          b"\x01" * 32), conf.fee_dlt)
    with pytest.raises(ProofDiscontinuity):
        node.on_confirmation(forged)
    assert node.halted


def test_unknown_transaction_recorded_not_executed():
    node, caas = make_node()
    stranger = signed(CAROL, 0, BOB.address, 1).encode()
    [conf] = caas.order([stranger])
    before = node.state_root
    node.on_confirmation(Confirmation(conf.tx_hash, conf.proof, conf.fee_dlt))
    assert node.state_root == before and not node.staged
    assert [c.tx_hash for c in node.unknown_confirmations()] == [keccak256(stranger)]
    assert node.watermark.sequence_number == 1


def test_failed_transactions_still_get_receipts():
    node, caas = make_node()
    bad_nonce = signed(ALICE, 5, BOB.address, 1).encode()
    arun(node.ingest(bad_nonce))
    before = node.state_root
    node.on_confirmation(caas.order([bad_nonce])[0])
    receipt, _ = node.get_receipt(keccak256(bad_nonce))
    assert receipt.status == 0 and receipt.gas_used == 0 and node.state_root == before


def test_block_cutting():
    clock = Clock()
    node, caas = make_node(clock=clock, block_interval=10.0)
    # no block while nothing is staged
    clock.t += 20
    assert node.cut_block() is None
    raws = transfers(3)
    for raw in raws:
        arun(node.ingest(raw))
    for conf in caas.order(raws):
        node.on_confirmation(conf)
    block = node.cut_block()
    assert block is not None and block.number == 1 and len(block.transactions) == 3
    receipts = node.block_receipts(block)
    assert block.header.receipts_root == receipts_root(receipts)
    assert block.header.transactions_root == transactions_root(block.transactions)
    assert block.header.state_root == node.state_root
    # Δ not yet elapsed
    more = transfers(1, start=3)
    arun(node.ingest(more[0]))
    node.on_confirmation(caas.order(more)[0])
    clock.t += 9
    assert node.cut_block() is None
    clock.t += 1
    second = node.cut_block()
    assert second.header.timestamp - block.header.timestamp >= 10
    assert second.header.parent_hash == block.hash
    receipt, where = node.get_receipt(keccak256(raws[1]))
    assert where.number == 1 and where.index == 1 and receipt.cumulative_gas_used == 42000


def test_two_nodes_identical_blocks():
    clock = Clock()
    feed = FakeCaas()
    a, _ = make_node(clock=clock, caas=feed, block_interval=10.0)
    b, _ = make_node(clock=clock, caas=feed, block_interval=10.0)
    raws = transfers(5)
    for raw in raws:
        arun(a.ingest(raw))
        arun(b.ingest(raw))
    confs = feed.order(raws)
    for node in (a, b):
        for conf in confs[:3]:
            node.on_confirmation(conf)
    clock.t += 20
    assert a.cut_block().hash == b.cut_block().hash
    for node in (a, b):
        for conf in confs[3:]:
            node.on_confirmation(conf)
    clock.t += 20
    assert a.cut_block().hash == b.cut_block().hash


def test_no_pool_ingress_order_irrelevant():
    keys = [ALICE, BOB, CAROL]
    raws = [signed(k, n, b"\x0d" * 20, 1 + n).encode() for k in keys for n in range(3)]
    genesis = {k.address: 10 * ETHER for k in keys}
    feed = FakeCaas()
    confs = feed.order(raws)
    roots = set()
    for seed in range(3):
        node, _ = make_node(caas=feed, genesis=genesis)
        order = raws[:]
        random.Random(seed).shuffle(order)
        for raw in order:
            arun(node.ingest(raw))
        for conf in confs:
            node.on_confirmation(conf)
        roots.add(node.state_root)
    assert len(roots) == 1


def test_restart_resumes_from_watermark(tmp_path):
    feed = FakeCaas()
    raws = transfers(10)
    confs = feed.order(raws)
    live, _ = make_node(SqliteStore(str(tmp_path / "a.sqlite")), caas=feed)
    for raw in raws:
        arun(live.ingest(raw))
    for conf in confs[:4]:
        live.on_confirmation(conf)
    live.cut_block(force=True)
    live.on_confirmation(confs[4])
    live.close()
    # reference run without interruption
    ref, _ = make_node(caas=feed)
    for raw in raws:
        arun(ref.ingest(raw))
    for conf in confs:
        ref.on_confirmation(conf)

    again, _ = make_node(SqliteStore(str(tmp_path / "a.sqlite")), caas=feed)
    assert again.watermark.sequence_number == 5 and again.head.number == 1 and len(again.staged) == 1
    assert len(again.pending) == 5
    assert arun(again.resync()) == 5
    assert again.state_root == ref.state_root


def test_replay_reproduces_and_detects_tampering():
    clock = Clock()
    node, caas = make_node(clock=clock, block_interval=10.0)
    raws = transfers(8) + [signed(BOB, 9, ALICE.address, 1).encode()]
    for raw in raws:
        arun(node.ingest(raw))
    for i, conf in enumerate(caas.order(raws)):
        node.on_confirmation(conf)
        if i % 3 == 2:
            clock.t += 20
            node.cut_block()
    blocks = {b.number: b.hash for b in node.blocks()}
    again = replay(node.config, node.journal(), expected_blocks=blocks, expected_root=node.state_root)
    assert again.state_root == node.state_root
    assert replay(node.config, []).state_root == make_node()[0].state_root
    journal = node.journal()
    victim = next(i for i, e in enumerate(journal) if e.kind == "confirmation")
    conf = journal[victim].confirmation
    flipped = bytearray(conf.payload)
    flipped[-1] ^= 1
    journal[victim] = type(journal[victim])("confirmation", Confirmation(conf.tx_hash, conf.proof, conf.fee_dlt,
                                                                         bytes(flipped)), True)
    with pytest.raises(DivergenceDetected):
        replay(node.config, journal, expected_blocks=blocks)


def test_in_process_stack_round_trip():
    async def go():
        stack = await spawn(config(), timer_tick=0.01)
        handle = stack.nodes["net-1"]
        raw = signed(ALICE, 0, BOB.address, 7).encode()
        tx_hash = await handle.node.ingest(raw)
        await wait_until(lambda: handle.node.get_receipt(tx_hash) is not None)
        assert handle.node.state.get_balance(BOB.address) == 1000 * ETHER + 7
        assert stack.service.message_count("net-1") == 1
        await stack.close()
    arun(go())


def test_http_stack_round_trip():
    async def go():
        stack = await spawn(config(), transport="http", timer_tick=0.01)
        node = stack.node("net-1")
        raws = transfers(5)
        for raw in raws:
            await node.ingest(raw)
        await wait_until(lambda: node.watermark.sequence_number == 5)
        assert [seq for _, seq, _ in node.execution_log] == [1, 2, 3, 4, 5]
        await stack.close()
    arun(go())
