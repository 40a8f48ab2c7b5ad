"""``mediator run --config FILE`` and ``mediator status``."""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import signal
import sys

from ..primitives.crypto import PrivateKey
from ..rpc.client import HttpRpcClient
from ..state.kv import SqliteStore
from ..types import from_hex
from .mediator import ChainEndpoint, Mediator

DEFAULT_CONFIG = "mediator.json"


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("key_path", "state_path"):
        if key not in cfg:
            raise ValueError(f"mediator config needs {key!r}")
        cfg[key] = os.path.join(base, cfg[key])
    for side in ("origin", "destination"):
        env = os.environ.get(f"MEDIATOR_{side.upper()}_RPC")
        if env:
            cfg[side]["rpc_url"] = env
    return cfg


def read_key(path: str) -> PrivateKey:
    with open(path) as fh:
        text = fh.read().strip()
    return PrivateKey(bytes.fromhex(text[2:] if text.startswith("0x") else text))


def build_mediator(cfg: dict) -> Mediator:
    key = read_key(cfg["key_path"])
    endpoints = {
        side: ChainEndpoint(side, HttpRpcClient(cfg[side]["rpc_url"]), from_hex(cfg[side]["bridge"]),
                            cfg[side].get("chain_id"))
        for side in ("origin", "destination")
    }
    return Mediator(endpoints["origin"], endpoints["destination"], key,
                    store=SqliteStore(cfg["state_path"]),
                    confirmation_depth=int(cfg.get("confirmation_depth", 1)),
                    poll_interval=float(cfg.get("poll_interval", 1.0)))


async def _run(cfg: dict) -> None:
    mediator = build_mediator(cfg)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    try:
        await mediator.run(stop)
    finally:
        for endpoint in mediator.chains.values():
            await endpoint.rpc.close()
        mediator.store.close()


def _status(cfg: dict) -> dict:
    key = read_key(cfg["key_path"])
    store = SqliteStore(cfg["state_path"])
    try:
        endpoints = {side: ChainEndpoint(side, None, from_hex(cfg[side]["bridge"])) for side in ("origin", "destination")}
        return Mediator(endpoints["origin"], endpoints["destination"], key, store=store).status()
    finally:
        store.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mediator", description="lock-and-mint bridge relayer")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="scan both chains and relay events until interrupted")
    run.add_argument("--config", default=os.environ.get("MEDIATOR_CONFIG", DEFAULT_CONFIG))
    status = sub.add_parser("status", help="print cursors and relay counts")
    status.add_argument("--config", default=os.environ.get("MEDIATOR_CONFIG", DEFAULT_CONFIG))
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"mediator: cannot load config: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        asyncio.run(_run(cfg))
        return 0
    json.dump(_status(cfg), sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
