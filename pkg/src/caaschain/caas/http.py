"""HTTP surfaces of the consensus service and the clients nodes use to reach it."""
from __future__ import annotations

import asyncio
import logging
from fractions import Fraction
from typing import Dict, List, Optional

import aiohttp
from aiohttp import web

from ..state.kv import KvStore
from ..types import ConsensusProof, MalformedTransaction, from_hex, to_data
from .backend import (
    DEFAULT_FEE_PER_MESSAGE,
    BackendUnavailable,
    ConsensusBackend,
    Delivery,
    LatencyModel,
    MockBackend,
    TopicNotFound,
)
from .proof import Confirmation
from .service import (
    DEFAULT_WEI_PER_TINYBAR,
    ConsensusService,
    MessageRecord,
    NotFound,
    TamperDetected,
    UnknownNetwork,
)

log = logging.getLogger(__name__)


def record_to_json(record: MessageRecord) -> dict:
    body = record.confirmation().to_json()
    body.update(
        network_id=record.network_id,
        payload=to_data(record.payload),
        received_at_ns=record.received_at_ns,
        delivered_at_ns=record.delivered_at_ns,
    )
    return body


def _error(status: int, message: str) -> web.Response:
    return web.json_response({"error": message}, status=status)


# server side


def caas_app(service: ConsensusService) -> web.Application:
    routes = web.RouteTableDef()

    @routes.post("/v1/networks/{network_id}/transactions")
    async def submit(request: web.Request):
        try:
            body = await request.json()
            raw = from_hex(body["raw_tx"])
        except (ValueError, KeyError, TypeError):
            return _error(400, "body must be {\"raw_tx\": \"0x...\"}")
        try:
            tx_hash = await service.submit_transaction(request.match_info["network_id"], raw)
        except UnknownNetwork as exc:
            return _error(404, f"unknown network {exc.args[0]}")
        except MalformedTransaction as exc:
            return _error(400, f"malformed transaction: {exc}")
        except BackendUnavailable as exc:
            return _error(503, str(exc))
        return web.json_response({"tx_hash": to_data(tx_hash)})

    @routes.post("/v1/networks")
    async def register(request: web.Request):
        body = await request.json()
        network_id = body["network_id"]
        channel = await service.register_network(network_id)
        callback = body.get("callback")
        if callback:
            service.subscribe(network_id, HttpSink(callback))
        return web.json_response({"network_id": network_id, "topic_id": channel.topic_id})

    @routes.get("/v1/networks/{network_id}/messages/{tx_hash}")
    async def audit(request: web.Request):
        try:
            record = service.audit_fetch(request.match_info["network_id"], from_hex(request.match_info["tx_hash"]))
        except (UnknownNetwork, NotFound):
            return _error(404, "not found")
        except ValueError:
            return _error(400, "malformed hash")
        except TamperDetected as exc:
            return web.json_response({"error": str(exc), "sequence_number": exc.sequence_number}, status=409)
        body = record_to_json(record)
        body["verified"] = True
        return web.json_response(body)

    @routes.get("/v1/networks/{network_id}/confirmations")
    async def pull(request: web.Request):
        after = int(request.query.get("after", "0"))
        try:
            records = service.records(request.match_info["network_id"], after)
        except UnknownNetwork:
            return _error(404, "unknown network")
        return web.json_response([record_to_json(r) for r in records])

    @routes.get("/v1/status")
    async def status(request: web.Request):
        return web.json_response({
            "networks": {n: {"topic_id": c.topic_id, "last_sequence": c.last_sequence}
                         for n, c in service.channels.items()},
            "messages_persisted": service.messages_persisted,
            "total_fee_dlt": service.total_fee_dlt,
        })

    app = web.Application()
    app.add_routes(routes)
    return app


class HttpSink:
    """Pushes confirmations to ``{base}/v1/confirmations``; non-2xx raises so the service retries."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.url = base_url.rstrip("/") + "/v1/confirmations"
        self.timeout = aiohttp.ClientTimeout(total=timeout)
        self._session: Optional[aiohttp.ClientSession] = None

    async def __call__(self, conf: Confirmation) -> None:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(timeout=self.timeout)
        async with self._session.post(self.url, json=conf.to_json()) as resp:
            if resp.status >= 300:
                raise ConnectionError(f"{self.url} answered {resp.status}")

    async def close(self) -> None:
        if self._session is not None:
            await self._session.close()

    def __repr__(self):
        return f"HttpSink({self.url})"


# client side


class LocalCaasClient:
    """Node-side client bound to an in-process service."""

    def __init__(self, service: ConsensusService):
        self.service = service

    async def submit(self, network_id: str, raw_tx: bytes) -> bytes:
        return await self.service.submit_transaction(network_id, raw_tx)

    async def fetch_after(self, network_id: str, sequence_number: int) -> List[Confirmation]:
        return self.service.confirmations_after(network_id, sequence_number)

    async def audit(self, network_id: str, tx_hash: bytes) -> MessageRecord:
        return self.service.audit_fetch(network_id, tx_hash)


class HttpCaasClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = aiohttp.ClientTimeout(total=timeout)
        self._session: Optional[aiohttp.ClientSession] = None

    def _http(self) -> aiohttp.ClientSession:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(timeout=self.timeout)
        return self._session

    async def submit(self, network_id: str, raw_tx: bytes) -> bytes:
        url = f"{self.base_url}/v1/networks/{network_id}/transactions"
        async with self._http().post(url, json={"raw_tx": to_data(raw_tx)}) as resp:
            body = await resp.json()
            if resp.status != 200:
                raise ConnectionError(body.get("error", f"status {resp.status}"))
            return from_hex(body["tx_hash"])

    async def register(self, network_id: str, callback: Optional[str] = None) -> str:
        payload = {"network_id": network_id}
        if callback:
            payload["callback"] = callback
        async with self._http().post(f"{self.base_url}/v1/networks", json=payload) as resp:
            resp.raise_for_status()
            return (await resp.json())["topic_id"]

    async def fetch_after(self, network_id: str, sequence_number: int) -> List[Confirmation]:
        url = f"{self.base_url}/v1/networks/{network_id}/confirmations"
        async with self._http().get(url, params={"after": str(sequence_number)}) as resp:
            resp.raise_for_status()
            return [Confirmation.from_json(item) for item in await resp.json()]

    async def audit(self, network_id: str, tx_hash: bytes) -> dict:
        url = f"{self.base_url}/v1/networks/{network_id}/messages/{to_data(tx_hash)}"
        async with self._http().get(url) as resp:
            body = await resp.json()
            if resp.status == 404:
                raise NotFound(to_data(tx_hash))
            if resp.status == 409:
                raise TamperDetected(body["sequence_number"])
            resp.raise_for_status()
            return body

    async def close(self) -> None:
        if self._session is not None:
            await self._session.close()


# http-stub backend: the ordering network behind an HTTP boundary


def _proof_json(proof: ConsensusProof) -> dict:
    return {"topic_id": proof.topic_id, "sequence_number": proof.sequence_number,
            "consensus_timestamp_ns": proof.consensus_timestamp_ns, "running_hash": to_data(proof.running_hash)}


def _proof_from_json(body: dict) -> ConsensusProof:
    return ConsensusProof(body["topic_id"], int(body["sequence_number"]), int(body["consensus_timestamp_ns"]),
                          from_hex(body["running_hash"]))


def stub_backend_app(backend: Optional[MockBackend] = None) -> web.Application:
    """A stand-alone ordering network exposing topics over HTTP (polled for deliveries)."""
    backend = backend or MockBackend()
    delivered: Dict[str, List[Delivery]] = {}
    arrived: Dict[str, asyncio.Condition] = {}
    consumers: List[asyncio.Task] = []

    async def consume(topic_id: str) -> None:
        async for delivery in backend.deliveries(topic_id):
            delivered[topic_id].append(delivery)
            async with arrived[topic_id]:
                arrived[topic_id].notify_all()

    def attach(topic_id: str) -> None:
        backend.create_topic_sync(topic_id)
        if topic_id not in delivered:
            delivered[topic_id] = []
            arrived[topic_id] = asyncio.Condition()
            consumers.append(asyncio.create_task(consume(topic_id)))

    routes = web.RouteTableDef()

    @routes.post("/topics")
    async def create(request):
        topic_id = backend.create_topic_sync()
        attach(topic_id)
        return web.json_response({"topic_id": topic_id})

    @routes.put("/topics/{topic_id}")
    async def ensure(request):
        attach(request.match_info["topic_id"])
        return web.json_response({"topic_id": request.match_info["topic_id"]})

    @routes.post("/topics/{topic_id}/messages")
    async def submit(request):
        topic_id = request.match_info["topic_id"]
        body = await request.json()
        try:
            proof = await backend.submit(topic_id, from_hex(body["payload"]))
        except TopicNotFound:
            return _error(404, "topic not found")
        except BackendUnavailable as exc:
            return _error(503, str(exc))
        return web.json_response(_proof_json(proof))

    @routes.get("/topics/{topic_id}/messages")
    async def poll(request):
        topic_id = request.match_info["topic_id"]
        if topic_id not in delivered:
            return _error(404, "topic not found")
        after = int(request.query.get("after", "0"))
        wait = float(request.query.get("wait", "0"))
        items = delivered[topic_id]
        if len(items) <= after and wait > 0:
            try:
                async with arrived[topic_id]:
                    await asyncio.wait_for(arrived[topic_id].wait_for(lambda: len(items) > after), wait)
            except asyncio.TimeoutError:
                pass
        out = [dict(_proof_json(d.proof), payload=to_data(d.payload), fee=d.fee, received_at_ns=d.received_at_ns,
                    delivered_at_ns=d.delivered_at_ns) for d in items[after:]]
        return web.json_response(out)

    async def cleanup(app):
        for task in consumers:
            task.cancel()

    app = web.Application()
    app.add_routes(routes)
    app.on_cleanup.append(cleanup)
    return app


class HttpStubBackend(ConsensusBackend):
    def __init__(self, url: str, *, fee_per_message: int = DEFAULT_FEE_PER_MESSAGE, long_poll: float = 1.0):
        self.url = url.rstrip("/")
        self.fee_per_message = fee_per_message
        self.long_poll = long_poll
        self._session: Optional[aiohttp.ClientSession] = None

    def _http(self) -> aiohttp.ClientSession:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession()
        return self._session

    def fee_quote(self, payload: bytes) -> int:
        return self.fee_per_message

    async def create_topic(self) -> str:
        async with self._http().post(f"{self.url}/topics") as resp:
            resp.raise_for_status()
            return (await resp.json())["topic_id"]

    async def ensure_topic(self, topic_id: str, last: Optional[ConsensusProof] = None) -> None:
        async with self._http().put(f"{self.url}/topics/{topic_id}") as resp:
            resp.raise_for_status()

    async def submit(self, topic_id: str, payload: bytes) -> ConsensusProof:
        try:
            async with self._http().post(f"{self.url}/topics/{topic_id}/messages",
                                         json={"payload": to_data(payload)}) as resp:
                body = await resp.json()
                if resp.status == 404:
                    raise TopicNotFound(topic_id)
                if resp.status != 200:
                    raise BackendUnavailable(body.get("error", f"status {resp.status}"))
                return _proof_from_json(body)
        except aiohttp.ClientError as exc:
            raise BackendUnavailable(str(exc)) from exc

    async def deliveries(self, topic_id: str):
        cursor = 0
        while True:
            try:
                async with self._http().get(f"{self.url}/topics/{topic_id}/messages",
                                            params={"after": str(cursor), "wait": str(self.long_poll)}) as resp:
                    resp.raise_for_status()
                    items = await resp.json()
            except aiohttp.ClientError:
                log.warning("stub backend poll failed; retrying", exc_info=True)
                await asyncio.sleep(self.long_poll)
                continue
            for item in items:
                cursor += 1
                yield Delivery(from_hex(item["payload"]), _proof_from_json(item), int(item["fee"]),
                               int(item["received_at_ns"]), int(item["delivered_at_ns"]))

    async def close(self) -> None:
        if self._session is not None:
            await self._session.close()


def build_service(config: Optional[dict] = None, store: Optional[KvStore] = None) -> ConsensusService:
    """Service from config keys: backend (mock|http-stub), latency, fee_per_message, fail_rate,
    duplicate_rate, seed, exchange_rate (wei per backend fee unit, e.g. "30000000000/51779"), stub_url."""
    config = dict(config or {})
    kind = config.get("backend", "mock")
    fee = int(config.get("fee_per_message", DEFAULT_FEE_PER_MESSAGE))
    if kind == "mock":
        backend: ConsensusBackend = MockBackend(LatencyModel.from_config(config.get("latency")),
                                                fee_per_message=fee,
                                                fail_rate=float(config.get("fail_rate", 0.0)),
                                                duplicate_rate=float(config.get("duplicate_rate", 0.0)),
                                                seed=config.get("seed"))
    elif kind == "http-stub":
        backend = HttpStubBackend(config["stub_url"], fee_per_message=fee)
    else:
        raise ValueError(f"unknown backend kind {kind!r}")
    rate = config.get("exchange_rate")
    return ConsensusService(backend, store, wei_per_fee_unit=Fraction(rate) if rate is not None
                            else DEFAULT_WEI_PER_TINYBAR)
