"""Wire a consensus service and one or more nodes into a running stack.

Two transports are supported.  ``in-process`` hands confirmations straight
to the node; ``http`` puts the consensus service, the confirmation receivers
and the RPC endpoints on real sockets.
"""
from __future__ import annotations

import asyncio
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from aiohttp import web

from .caas.http import HttpCaasClient, LocalCaasClient, build_service, caas_app
from .caas.service import ConsensusService
from .node.config import NodeConfig
from .node.node import Node
from .node.service import BlockTimer, confirmation_app, confirmation_sink
from .rpc.server import RpcDispatcher, rpc_app
from .state.kv import MemoryStore, SqliteStore

log = logging.getLogger(__name__)


async def serve(app: web.Application, host: str = "127.0.0.1", port: int = 0):
    runner = web.AppRunner(app, access_log=None)
    await runner.setup()
    site = web.TCPSite(runner, host, port)
    await site.start()
    bound = site._server.sockets[0].getsockname()[1]
    return runner, f"http://{host}:{bound}"


@dataclass
class NodeHandle:
    node: Node
    timer: BlockTimer
    rpc: RpcDispatcher
    rpc_url: Optional[str] = None
    callback_url: Optional[str] = None


@dataclass
class Stack:
    service: ConsensusService
    nodes: Dict[str, NodeHandle] = field(default_factory=dict)
    transport: str = "in-process"
    caas_url: Optional[str] = None
    _runners: List[web.AppRunner] = field(default_factory=list)
    _clients: List[HttpCaasClient] = field(default_factory=list)

    @classmethod
    async def spawn(cls, configs: List[NodeConfig], *, caas_config: Optional[dict] = None,
                    transport: str = "in-process", serve_rpc: bool = False, data_dir: Optional[str] = None,
                    timer_tick: Optional[float] = None) -> "Stack":
        if transport not in ("in-process", "http"):
            raise ValueError(f"unknown transport {transport!r}")
        caas_store = SqliteStore.in_dir(os.path.join(data_dir, "caas")) if data_dir else MemoryStore()
        stack = cls(build_service(caas_config, caas_store), transport=transport)
        if transport == "http":
            runner, stack.caas_url = await serve(caas_app(stack.service))
            stack._runners.append(runner)
        for config in configs:
            await stack.add_node(config, serve_rpc=serve_rpc or transport == "http", data_dir=data_dir,
                                 timer_tick=timer_tick)
        return stack

    async def add_node(self, config: NodeConfig, *, serve_rpc: bool = False, data_dir: Optional[str] = None,
                       timer_tick: Optional[float] = None) -> NodeHandle:
        store = None
        if config.data_dir is None and data_dir is not None:
            store = SqliteStore.in_dir(os.path.join(data_dir, config.network_id))
        if self.transport == "http":
            client = HttpCaasClient(self.caas_url)
            self._clients.append(client)
            node = Node(config, store, caas=client)
            runner, callback = await serve(confirmation_app(node), config.confirmation_host, config.confirmation_port)
            self._runners.append(runner)
            await client.register(config.network_id, callback)
        else:
            node = Node(config, store, caas=LocalCaasClient(self.service))
            callback = None
            await self.service.register_network(config.network_id)
            self.service.subscribe(config.network_id, confirmation_sink(node))
        await node.resync()
        handle = NodeHandle(node, BlockTimer(node, timer_tick).start(), RpcDispatcher(node), callback_url=callback)
        if serve_rpc:
            runner, handle.rpc_url = await serve(rpc_app(handle.rpc), port=config.rpc_port)
            self._runners.append(runner)
        self.nodes[config.network_id] = handle
        return handle

    def node(self, network_id: str) -> Node:
        return self.nodes[network_id].node

    async def close(self) -> None:
        for handle in self.nodes.values():
            await handle.timer.stop()
        await self.service.close()
        for runner in reversed(self._runners):
            await runner.cleanup()
        for client in self._clients:
            await client.close()
        for handle in self.nodes.values():
            handle.node.close()
        self.service.store.close()


class BackgroundStack:
    """A Stack on its own event loop thread, for synchronous callers such as web3.py."""

    def __init__(self, configs: List[NodeConfig], **kwargs):
        self.loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self.loop.run_forever, name="stack-loop", daemon=True)
        self._thread.start()
        kwargs.setdefault("serve_rpc", True)
        self.stack: Stack = self.run(Stack.spawn(configs, **kwargs))

    def run(self, coro, timeout: float = 60.0):
        return asyncio.run_coroutine_threadsafe(coro, self.loop).result(timeout)

    def call(self, fn, *args):
        """Run a plain callable on the loop thread (node state is single-threaded)."""
        async def wrapper():
            return fn(*args)
        return self.run(wrapper())

    def close(self) -> None:
        self.run(self.stack.close())
        self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join(5)
        self.loop.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
