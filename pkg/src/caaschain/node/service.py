"""Runtime around a Node: confirmation intake, the block timer, and the HTTP receiver."""
from __future__ import annotations

import asyncio
import logging
from typing import Optional

from aiohttp import web

from ..caas.proof import Confirmation
from .node import Node, NodeHalted, ProofDiscontinuity

log = logging.getLogger(__name__)


def deliver(node: Node, conf: Confirmation) -> str:
    """Hand one confirmation to the node; protocol-level rejections are logged, not retried."""
    try:
        applied = node.on_confirmation(conf)
    except (ProofDiscontinuity, NodeHalted) as exc:
        log.error("confirmation seq %d rejected: %s", conf.proof.sequence_number, exc)
        return "halted"
    return "applied" if applied else "ignored"


def confirmation_sink(node: Node):
    """Subscriber callable for an in-process consensus service.

    Store failures propagate so the service retries delivery.
    """
    async def sink(conf: Confirmation) -> None:
        deliver(node, conf)

    sink.node = node
    return sink


def confirmation_app(node: Node) -> web.Application:
    async def receive(request: web.Request):
        try:
            conf = Confirmation.from_json(await request.json())
        except (ValueError, KeyError, TypeError) as exc:
            return web.json_response({"error": f"bad confirmation: {exc}"}, status=400)
        # a StoreFailure escapes as a 500 and the sender retries
        return web.json_response({"status": deliver(node, conf)})

    app = web.Application()
    app.router.add_post("/v1/confirmations", receive)
    return app


class BlockTimer:
    """Cuts a block whenever the interval has elapsed and something is staged."""

    def __init__(self, node: Node, tick: Optional[float] = None):
        self.node = node
        self.tick = tick if tick is not None else min(node.config.block_interval / 4, 0.25)
        self._task: Optional[asyncio.Task] = None

    def step(self) -> None:
        node = self.node
        if node.halted:
            return
        try:
            node.check_gaps()
        except ProofDiscontinuity:
            return
        try:
            node.cut_block()
        except Exception:
            log.exception("block cut failed; retrying on next tick")

    async def run(self) -> None:
        while True:
            await asyncio.sleep(self.tick)
            self.step()

    def start(self) -> "BlockTimer":
        self._task = asyncio.create_task(self.run(), name=f"blocks-{self.node.config.network_id}")
        return self

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None
