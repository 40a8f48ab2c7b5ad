"""``bench transfer|deploy|tps|compare``.

Structured records go to stdout (one JSON object per line, or ``--out``);
the human-readable table goes to stderr.  The exit code is nonzero when a
report fails one of its own invariants.
"""
from __future__ import annotations

import argparse
import asyncio
import os
import sys
from contextlib import asynccontextmanager
from fractions import Fraction
from typing import List

from ..node.config import NodeConfig
from ..primitives.crypto import PrivateKey
from ..rpc.client import HttpRpcClient, LocalRpcClient
from ..stack import Stack
from ..types import from_hex
from . import reports
from .runner import BENCH_KEY, DeploymentReverted, TpsChannel, bench_genesis, run_deploy, run_tps, run_transfer


def _gas_price(text: str) -> int:
    text = text.strip().lower()
    if text.endswith("gwei"):
        return int(Fraction(text[:-4]) * 10**9)
    return int(text)


def _key(args) -> PrivateKey:
    raw = args.key or os.environ.get("BENCH_KEY")
    return PrivateKey(from_hex(raw)) if raw else BENCH_KEY


@asynccontextmanager
async def _targets(args, channels: int = 1):
    """Yields (rpc clients, nodes or None, wei per fee unit)."""
    if args.stack == "attach":
        urls = args.rpc_url or [u for u in os.environ.get("BENCH_RPC_URL", "").split(",") if u]
        if len(urls) < channels:
            raise SystemExit(f"attach mode needs {channels} --rpc-url endpoint(s)")
        clients = [HttpRpcClient(u) for u in urls[:channels]]
        try:
            yield clients, [None] * channels, Fraction(args.exchange_rate)
        finally:
            for c in clients:
                await c.close()
        return
    genesis = bench_genesis(_key(args))
    configs = [NodeConfig(chain_id=1337 + i, network_id=f"net-{i + 1}", genesis=genesis,
                          block_interval=args.block_interval) for i in range(channels)]
    caas = {"latency": {"kind": "fixed", "ms": args.latency_ms}, "exchange_rate": args.exchange_rate}
    stack = await Stack.spawn(configs, caas_config=caas, transport=args.transport)
    clients: List = []
    try:
        for handle in stack.nodes.values():
            clients.append(HttpRpcClient(handle.rpc_url) if args.transport == "http" else LocalRpcClient(handle.rpc))
        yield clients, [h.node for h in stack.nodes.values()], stack.service.wei_per_fee_unit
    finally:
        for c in clients:
            await c.close()
        await stack.close()


def _emit(args, records, tables) -> int:
    text = reports.dump_lines(records)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for table in tables:
        print(table, file=sys.stderr)
    problems = [p for r in records if hasattr(r, "check") for p in r.check()]
    for p in problems:
        print(f"invariant failed: {p}", file=sys.stderr)
    return 1 if problems else 0


async def _transfer(args) -> int:
    async with _targets(args) as (clients, _, rate):
        costs, finality = await run_transfer(clients[0], _key(args), count=args.count, gas_price=args.gas_price,
                                             value=args.value, wei_per_fee_unit=rate, latency_ms=args.latency_ms)
    return _emit(args, costs + [finality], [reports.cost_table(costs[0]), reports.finality_table(finality)])


async def _deploy(args) -> int:
    with open(args.bytecode, "rb") as fh:
        blob = fh.read()
    try:
        text = blob.decode().strip()
        initcode = bytes.fromhex(text[2:] if text.startswith("0x") else text)
    except (UnicodeDecodeError, ValueError):
        initcode = blob
    async with _targets(args) as (clients, _, rate):
        try:
            report = await run_deploy(clients[0], initcode, _key(args), gas_price=args.gas_price,
                                      wei_per_fee_unit=rate)
        except DeploymentReverted as exc:
            _emit(args, [exc.report], [reports.cost_table(exc.report)])
            print(f"deployment reverted: {exc.report.tx_hash}", file=sys.stderr)
            return 1
    return _emit(args, [report], [reports.cost_table(report)])


async def _tps(args) -> int:
    async with _targets(args, args.channels) as (clients, nodes, _):
        channels = [TpsChannel(f"net-{i + 1}", c, _key(args), n) for i, (c, n) in enumerate(zip(clients, nodes))]
        report = await run_tps(channels, args.total, gas_price=args.gas_price, timeout=args.timeout)
    code = _emit(args, [report], [reports.tps_table(report)])
    return 1 if report.failed else code


def _load_report(spec: str, want: str = None):
    if spec.startswith("ref:"):
        refs = reports.reference_reports()
        name = spec[4:]
        if name not in refs:
            raise SystemExit(f"unknown reference {name!r}; choose from {', '.join(sorted(refs))}")
        return refs[name]
    with open(spec) as fh:
        loaded = reports.load_lines(fh.read())
    for r in loaded:
        if want is None or r.record == want:
            return r
    raise SystemExit(f"{spec}: no {want or ''} record")


def _compare(args) -> int:
    a = _load_report(args.report[0], args.record)
    b = _load_report(args.report[1], args.record)
    try:
        rows = reports.compare(a, b)
    except reports.SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    print(reports.format_compare(rows, args.report[0], args.report[1]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="cost, finality and throughput benchmarks")
    parser.add_argument("--stack", choices=("spawn", "attach"), default=os.environ.get("BENCH_STACK", "spawn"))
    parser.add_argument("--rpc-url", action="append", help="node endpoint(s) in attach mode (env BENCH_RPC_URL)")
    parser.add_argument("--key", help="funded private key, hex (env BENCH_KEY)")
    parser.add_argument("--transport", choices=("in-process", "http"), default="http")
    parser.add_argument("--latency-ms", type=float, default=0.0, help="mock backend latency when spawning")
    parser.add_argument("--block-interval", type=float, default=1.0)
    parser.add_argument("--exchange-rate", default="30000000000/51779", help="wei per backend fee unit")
    parser.add_argument("--out", help="write structured records here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transfer", help="fund transfers; cost and finality reports")
    t.add_argument("--count", type=int, default=1)
    t.add_argument("--gas-price", type=_gas_price, default=10**9)
    t.add_argument("--value", type=int, default=1)

    d = sub.add_parser("deploy", help="deploy initcode; cost decomposition")
    d.add_argument("--bytecode", required=True)
    d.add_argument("--gas-price", type=_gas_price, default=10**9)

    p = sub.add_parser("tps", help="flood transfers over several channels")
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--total", type=int, default=10000)
    p.add_argument("--gas-price", type=_gas_price, default=10**9)
    p.add_argument("--timeout", type=float, default=120.0)

    c = sub.add_parser("compare", help="side-by-side deltas of two reports (files or ref:NAME)")
    c.add_argument("--report", action="append", required=True)
    c.add_argument("--record", choices=("cost", "finality", "tps"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compare":
        if len(args.report) != 2:
            print("compare needs exactly two --report arguments", file=sys.stderr)
            return 2
        return _compare(args)
    if args.command == "tps" and args.stack == "spawn" and "--transport" not in (argv or sys.argv):
        args.transport = "in-process"
    runner = {"transfer": _transfer, "deploy": _deploy, "tps": _tps}[args.command]
    return asyncio.run(runner(args))


if __name__ == "__main__":
    sys.exit(main())
