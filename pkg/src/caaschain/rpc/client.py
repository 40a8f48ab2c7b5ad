"""Minimal async JSON-RPC clients: over HTTP, or straight into an in-process dispatcher."""
from __future__ import annotations

import itertools
from typing import Any, Optional

import aiohttp


class RpcCallError(RuntimeError):
    def __init__(self, code: int, message: str, data: Any = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.data = data


class RpcUnreachable(ConnectionError):
    pass


def _unwrap(response: dict) -> Any:
    if "error" in response:
        err = response["error"]
        raise RpcCallError(err.get("code", 0), err.get("message", ""), err.get("data"))
    return response.get("result")


class HttpRpcClient:
    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = aiohttp.ClientTimeout(total=timeout)
        self._ids = itertools.count(1)
        self._session: Optional[aiohttp.ClientSession] = None

    async def call(self, method: str, *params) -> Any:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(timeout=self.timeout)
        body = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": list(params)}
        try:
            async with self._session.post(self.url, json=body) as resp:
                return _unwrap(await resp.json())
        except (aiohttp.ClientError, TimeoutError) as exc:
            raise RpcUnreachable(f"{self.url}: {exc}") from exc

    async def close(self) -> None:
        if self._session is not None:
            await self._session.close()


class LocalRpcClient:
    def __init__(self, dispatcher):
        self.dispatcher = dispatcher
        self._ids = itertools.count(1)

    async def call(self, method: str, *params) -> Any:
        response = await self.dispatcher.handle(
            {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": list(params)})
        return _unwrap(response)

    async def close(self) -> None:
        pass
