"""Benchmark drivers.  They speak JSON-RPC only, so they run against a spawned
stack or an attached one alike; the TPS driver can also listen to in-process
nodes directly for exact execution times."""
from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional

from ..caas.service import DEFAULT_WEI_PER_TINYBAR
from ..primitives.crypto import PrivateKey, keccak256
from ..rpc.client import RpcCallError
from ..types import TX_CREATE_GAS, ETHER, Transaction, calldata_gas, from_hex, parse_quantity, to_data
from .reports import ChannelStats, CostReport, FinalityRecord, FinalityReport, TpsReport

BENCH_KEY = PrivateKey(keccak256(b"bench funding key"))
TRANSFER_GAS = 21000


class StackUnreachable(ConnectionError):
    pass


class BenchTimeout(TimeoutError):
    pass


class DeploymentReverted(RuntimeError):
    def __init__(self, report: CostReport):
        super().__init__(f"deployment {report.tx_hash} reverted")
        self.report = report


class IncompleteRun(RuntimeError):
    def __init__(self, report: TpsReport):
        super().__init__(f"{report.completeness}/{report.total} confirmed")
        self.report = report


def recipient(seed: bytes, i: int) -> bytes:
    return keccak256(seed + i.to_bytes(8, "big"))[12:]


async def wait_receipt(rpc, tx_hash: str, *, poll: float = 0.01, timeout: float = 60.0) -> dict:
    deadline = time.monotonic() + timeout
    while True:
        receipt = await rpc.call("eth_getTransactionReceipt", tx_hash)
        if receipt is not None:
            return receipt
        if time.monotonic() > deadline:
            raise BenchTimeout(f"no receipt for {tx_hash} within {timeout}s")
        await asyncio.sleep(poll)


def cost_from_receipt(kind: str, receipt: dict, tx: Transaction, wei_per_fee_unit: Fraction) -> CostReport:
    extra = {}
    if kind == "deploy":
        extra = {"create_gas": TX_CREATE_GAS, "data_gas": calldata_gas(tx.data)}
    return CostReport.build(
        kind,
        gas_used=parse_quantity(receipt["gasUsed"]),
        gas_price=tx.gas_price,
        value=tx.value,
        fee_dlt=parse_quantity(receipt.get("feeDlt", "0x0")),
        wei_per_fee_unit=wei_per_fee_unit,
        tx_hash=receipt["transactionHash"],
        status=parse_quantity(receipt["status"]),
        contract_address=receipt.get("contractAddress"),
        **extra,
    )


async def _chain(rpc, key: PrivateKey):
    try:
        chain_id = parse_quantity(await rpc.call("eth_chainId"))
    except ConnectionError as exc:
        raise StackUnreachable(str(exc)) from exc
    nonce = parse_quantity(await rpc.call("eth_getTransactionCount", to_data(key.address), "latest"))
    return chain_id, nonce


async def run_transfer(rpc, key: PrivateKey = BENCH_KEY, *, count: int = 1, gas_price: int = 10**9,
                       value: int = 1, wei_per_fee_unit: Fraction = DEFAULT_WEI_PER_TINYBAR,
                       wallet_poll: float = 0.25, timeout: float = 60.0, latency_ms: Optional[float] = None):
    """Send ``count`` transfers; returns (cost reports, finality report).

    Each record uses four instants: t0 before signing, t1 when the node has
    answered, t2 the node's execution time from the receipt, t3 the first
    wallet poll that sees the recipient's new balance.
    """
    if value <= 0:
        raise ValueError("value must be positive so the wallet poll can observe it")
    chain_id, nonce = await _chain(rpc, key)
    seed = keccak256(key.address + nonce.to_bytes(8, "big") + time.time_ns().to_bytes(8, "big"))
    watching: Dict[str, tuple] = {}
    observed: Dict[str, int] = {}
    done = asyncio.Event()
    sent: List[tuple] = []

    async def wallet():
        # one poll cycle every wallet_poll seconds over every unconfirmed recipient
        while True:
            for tx_hash, (address, _) in list(watching.items()):
                balance = parse_quantity(await rpc.call("eth_getBalance", address, "latest"))
                if balance >= value:
                    observed[tx_hash] = time.time_ns()
                    del watching[tx_hash]
            if len(observed) == count:
                done.set()
                return
            await asyncio.sleep(wallet_poll)

    poller = None
    for i in range(count):
        t0 = time.time_ns()
        to = recipient(seed, i)
        tx = Transaction(nonce + i, gas_price, TRANSFER_GAS, to, value, b"").sign(key, chain_id)
        tx_hash = await rpc.call("eth_sendRawTransaction", to_data(tx.encode()))
        t1 = time.time_ns()
        watching[tx_hash] = (to_data(to), t1)
        sent.append((tx_hash, tx, t0, t1))
        if poller is None:
            poller = asyncio.create_task(wallet())
    try:
        await asyncio.wait_for(done.wait(), timeout)
    except asyncio.TimeoutError:
        raise BenchTimeout(f"{count - len(observed)} transfers not observed within {timeout}s") from None
    finally:
        poller.cancel()

    costs, records = [], []
    for tx_hash, tx, t0, t1 in sent:
        receipt = await wait_receipt(rpc, tx_hash, timeout=timeout)
        costs.append(cost_from_receipt("transfer", receipt, tx, wei_per_fee_unit))
        t3 = observed[tx_hash]
        # execution time comes from the node's clock; keep it inside [t1, t3]
        t2 = min(max(parse_quantity(receipt["executedAt"]), t1), t3)
        records.append(FinalityRecord.from_points(tx_hash, t0, t1, t2, t3))
    return costs, FinalityReport(records, latency_ms=latency_ms)


async def run_deploy(rpc, initcode: bytes, key: PrivateKey = BENCH_KEY, *, gas_price: int = 10**9,
                     wei_per_fee_unit: Fraction = DEFAULT_WEI_PER_TINYBAR, timeout: float = 60.0) -> CostReport:
    chain_id, nonce = await _chain(rpc, key)
    call = {"from": to_data(key.address), "data": to_data(initcode)}
    try:
        runtime = from_hex(await rpc.call("eth_call", call, "latest"))
        gas = parse_quantity(await rpc.call("eth_estimateGas", call))
    except RpcCallError:
        runtime, gas = None, 3_000_000
    tx = Transaction(nonce, gas_price, gas, None, 0, initcode).sign(key, chain_id)
    tx_hash = await rpc.call("eth_sendRawTransaction", to_data(tx.encode()))
    receipt = await wait_receipt(rpc, tx_hash, timeout=timeout)
    report = cost_from_receipt("deploy", receipt, tx, wei_per_fee_unit)
    if report.status != 1:
        raise DeploymentReverted(report)
    code = from_hex(await rpc.call("eth_getCode", receipt["contractAddress"], "latest"))
    if runtime is not None and code != runtime:
        raise RuntimeError(f"deployed code {code.hex()} differs from the simulated runtime {runtime.hex()}")
    return report


@dataclass
class TpsChannel:
    network_id: str
    rpc: object
    key: PrivateKey = BENCH_KEY
    node: object = None  # in-process Node, if available, for exact execution timestamps


async def run_tps(channels: List[TpsChannel], total: int, *, gas_price: int = 10**9,
                  timeout: float = 120.0) -> TpsReport:
    """Flood ``total`` transfers round-robin over the channels and wait for every execution."""
    k = len(channels)
    plans: List[List[tuple]] = []
    for idx, ch in enumerate(channels):
        share = total // k + (1 if idx < total % k else 0)
        chain_id, nonce = await _chain(ch.rpc, ch.key)
        seed = keccak256(ch.network_id.encode() + nonce.to_bytes(8, "big"))
        raws = []
        for i in range(share):
            tx = Transaction(nonce + i, gas_price, TRANSFER_GAS, recipient(seed, i), 1, b"").sign(ch.key, chain_id)
            raw = tx.encode()
            raws.append((to_data(keccak256(raw)), to_data(raw)))
        plans.append(raws)

    executed: List[Dict[str, List[int]]] = [dict() for _ in channels]
    order: List[List[int]] = [[] for _ in channels]
    last_exec = [0]
    remaining = [total]
    finished = asyncio.Event()
    listeners = []
    for idx, ch in enumerate(channels):
        if ch.node is None:
            continue

        def on_exec(receipt, idx=idx):
            key = to_data(receipt.tx_hash)
            seen = executed[idx].setdefault(key, [])
            seen.append(receipt.consensus_proof.sequence_number)
            order[idx].append(receipt.consensus_proof.sequence_number)
            last_exec[0] = time.time_ns()
            if len(seen) == 1:
                remaining[0] -= 1
                if remaining[0] == 0:
                    finished.set()
        ch.node.on_executed.append(on_exec)
        listeners.append((ch.node, on_exec))

    async def flood(idx: int):
        rpc = channels[idx].rpc
        for i, (_, raw) in enumerate(plans[idx]):
            await rpc.call("eth_sendRawTransaction", raw)
            if i % 32 == 31:
                # let delivery and execution interleave with an in-process flood
                await asyncio.sleep(0)

    async def poll_receipts(idx: int):
        rpc = channels[idx].rpc
        pending = [h for h, _ in plans[idx]]
        while pending:
            still = []
            for h in pending:
                receipt = await rpc.call("eth_getTransactionReceipt", h)
                if receipt is None:
                    still.append(h)
                    continue
                seq = parse_quantity(receipt["consensusProof"]["sequenceNumber"])
                executed[idx].setdefault(h, []).append(seq)
                last_exec[0] = max(last_exec[0], parse_quantity(receipt["executedAt"]))
                remaining[0] -= 1
            pending = still
            if pending:
                await asyncio.sleep(0.05)
        if remaining[0] == 0:
            finished.set()

    start = time.time_ns()
    tasks = [asyncio.create_task(flood(i)) for i in range(k)]
    pollers = [asyncio.create_task(poll_receipts(i)) for i, ch in enumerate(channels) if ch.node is None]
    try:
        await asyncio.gather(*tasks)
        if remaining[0]:
            await asyncio.wait_for(finished.wait(), timeout)
        timed_out = False
    except asyncio.TimeoutError:
        timed_out = True
    finally:
        for task in pollers:
            task.cancel()
        for node, fn in listeners:
            node.on_executed.remove(fn)

    stats = []
    for idx, ch in enumerate(channels):
        hashes = [h for h, _ in plans[idx]]
        receipts = 0
        seqs = []
        for h in hashes:
            receipt = await ch.rpc.call("eth_getTransactionReceipt", h)
            if receipt is not None:
                receipts += 1
                seqs.append(parse_quantity(receipt["consensusProof"]["sequenceNumber"]))
        observed = order[idx] if ch.node is not None else seqs
        stats.append(ChannelStats(
            ch.network_id,
            submitted=len(hashes),
            confirmed=sum(1 for h in hashes if h in executed[idx]),
            receipts=receipts,
            duplicates=sum(len(v) - 1 for v in executed[idx].values()),
            sequence_ordered=all(a < b for a, b in zip(observed, observed[1:])),
        ))
    completeness = sum(s.confirmed for s in stats)
    span = max(last_exec[0] - start, 1)
    report = TpsReport(k, total, span_ns=span, tps=completeness / (span / 1e9), completeness=completeness,
                       per_channel=stats)
    report.failed = timed_out or bool(report.check())
    return report


def bench_genesis(key: PrivateKey = BENCH_KEY, amount: int = 10**6 * ETHER) -> dict:
    return {key.address: amount}
