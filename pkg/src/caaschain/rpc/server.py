"""Web3-compatible JSON-RPC 2.0 over a Node."""
from __future__ import annotations

import json
import logging
from typing import Any, Callable, Dict, List, Optional

from aiohttp import web

from ..node.node import CaasUnreachable, GasPriceBelowFloor, Node, NodeHalted
from ..primitives import rlp
from ..primitives.crypto import InvalidSignature, keccak256
from ..types import (
    ZERO_ADDRESS,
    ZERO_HASH,
    Block,
    GasLimitBelowIntrinsic,
    MalformedTransaction,
    Receipt,
    Transaction,
    from_hex,
    parse_quantity,
    to_data,
    to_quantity,
)

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603
SERVER_ERROR = -32000

UNSUPPORTED_MESSAGE = "unsupported: consensus is external (CaaS)"

# mining-era and p2p-protocol methods with no meaning when ordering is delegated
UNSUPPORTED_METHODS = frozenset({
    "eth_mining", "eth_hashrate", "eth_coinbase", "eth_submitHashrate", "eth_submitWork", "eth_getWork",
    "eth_getUncleByBlockHashAndIndex", "eth_getUncleByBlockNumberAndIndex", "eth_getUncleCountByBlockHash",
    "eth_getUncleCountByBlockNumber", "eth_protocolVersion", "miner_start", "miner_stop", "miner_setEtherbase",
    "miner_setGasPrice", "net_peerCount",
})

EMPTY_UNCLES_HASH = keccak256(rlp.encode([]))
BLOCK_GAS_LIMIT = 30_000_000


class RpcError(Exception):
    def __init__(self, code: int, message: str, data: Any = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.data = data


def logs_bloom(entries) -> bytes:
    """2048-bit bloom over log addresses and topics."""
    bloom = 0
    for item in entries:
        digest = keccak256(item)
        for i in (0, 2, 4):
            bloom |= 1 << ((int.from_bytes(digest[i:i + 2], "big") & 2047))
    return bloom.to_bytes(256, "big")


def _bloom_items(receipts):
    for receipt in receipts:
        for entry in receipt.logs:
            yield entry.address
            yield from entry.topics


def _address(value) -> bytes:
    try:
        raw = from_hex(value)
    except ValueError as exc:
        raise RpcError(INVALID_PARAMS, str(exc)) from None
    if len(raw) != 20:
        raise RpcError(INVALID_PARAMS, f"invalid address {value!r}")
    return raw


def _hash(value) -> bytes:
    try:
        raw = from_hex(value)
    except ValueError as exc:
        raise RpcError(INVALID_PARAMS, str(exc)) from None
    if len(raw) != 32:
        raise RpcError(INVALID_PARAMS, f"invalid hash {value!r}")
    return raw


def _quantity(value) -> int:
    try:
        return parse_quantity(value)
    except ValueError as exc:
        raise RpcError(INVALID_PARAMS, str(exc)) from None


def _data(value) -> bytes:
    if value in (None, "", "0x"):
        return b""
    try:
        return from_hex(value)
    except ValueError as exc:
        raise RpcError(INVALID_PARAMS, str(exc)) from None


class RpcDispatcher:
    def __init__(self, node: Node, client_version: str = "caaschain/0.1.0"):
        self.node = node
        self.client_version = client_version
        self.methods: Dict[str, Callable] = {
            "web3_clientVersion": self.web3_client_version,
            "web3_sha3": self.web3_sha3,
            "net_version": self.net_version,
            "net_listening": lambda: True,
            "eth_chainId": self.eth_chain_id,
            "eth_syncing": lambda: False,
            "eth_accounts": lambda: [],
            "eth_blockNumber": self.eth_block_number,
            "eth_gasPrice": self.eth_gas_price,
            "eth_getBalance": self.eth_get_balance,
            "eth_getTransactionCount": self.eth_get_transaction_count,
            "eth_getCode": self.eth_get_code,
            "eth_getStorageAt": self.eth_get_storage_at,
            "eth_getBlockByNumber": self.eth_get_block_by_number,
            "eth_getBlockByHash": self.eth_get_block_by_hash,
            "eth_getBlockTransactionCountByNumber": self.eth_get_block_tx_count,
            "eth_getTransactionByHash": self.eth_get_transaction_by_hash,
            "eth_getTransactionReceipt": self.eth_get_transaction_receipt,
            "eth_call": self.eth_call,
            "eth_estimateGas": self.eth_estimate_gas,
            "eth_getLogs": self.eth_get_logs,
            "eth_sendRawTransaction": self.eth_send_raw_transaction,
        }

    # envelope

    async def handle(self, request: Any) -> Any:
        if isinstance(request, list):
            if not request:
                return self._error(None, INVALID_REQUEST, "empty batch")
            return [await self._handle_one(r) for r in request]
        return await self._handle_one(request)

    async def handle_raw(self, body: bytes) -> Any:
        try:
            request = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            return self._error(None, PARSE_ERROR, "parse error")
        return await self.handle(request)

    @staticmethod
    def _error(req_id, code, message, data=None) -> dict:
        err = {"code": code, "message": message}
        if data is not None:
            err["data"] = data
        return {"jsonrpc": "2.0", "id": req_id, "error": err}

    async def _handle_one(self, request: Any) -> dict:
        if not isinstance(request, dict) or not isinstance(request.get("method"), str):
            return self._error(request.get("id") if isinstance(request, dict) else None,
                               INVALID_REQUEST, "invalid request")
        req_id = request.get("id")
        method = request["method"]
        params = request.get("params") or []
        if not isinstance(params, list):
            return self._error(req_id, INVALID_PARAMS, "params must be an array")
        if method in UNSUPPORTED_METHODS or method.startswith("miner_"):
            return self._error(req_id, METHOD_NOT_FOUND, UNSUPPORTED_MESSAGE)
        handler = self.methods.get(method)
        if handler is None:
            return self._error(req_id, METHOD_NOT_FOUND, f"method not found: {method}")
        try:
            result = handler(*params)
            if hasattr(result, "__await__"):
                result = await result
        except RpcError as exc:
            return self._error(req_id, exc.code, exc.message, exc.data)
        except TypeError as exc:
            return self._error(req_id, INVALID_PARAMS, f"invalid params: {exc}")
        except Exception as exc:
            log.exception("rpc %s failed", method)
            return self._error(req_id, INTERNAL_ERROR, str(exc))
        return {"jsonrpc": "2.0", "id": req_id, "result": result}

    # helpers

    def _block_number(self, tag) -> Optional[int]:
        """None means the node's current state (which may be ahead of the head block)."""
        if tag is None or tag in ("latest", "pending", "safe", "finalized"):
            return None
        if tag == "earliest":
            return 0
        number = _quantity(tag)
        if number > self.node.head.number:
            raise RpcError(SERVER_ERROR, f"block {number} not found")
        return number

    def _resolve_block(self, tag) -> Block:
        number = self._block_number(tag)
        return self.node.head if number is None else self.node.get_block(number)

    def _state(self, tag):
        if isinstance(tag, dict):
            if "blockHash" in tag:
                block = self.node.get_block_by_hash(_hash(tag["blockHash"]))
                if block is None:
                    raise RpcError(SERVER_ERROR, "block not found")
                return self.node.state_at(block.number)
            tag = tag.get("blockNumber")
        return self.node.state_at(self._block_number(tag))

    def _tx_json(self, tx: Transaction, block: Optional[Block], index: Optional[int], sender: bytes) -> dict:
        return {
            "hash": to_data(tx.hash),
            "nonce": to_quantity(tx.nonce),
            "blockHash": to_data(block.hash) if block else None,
            # executed but not yet cut: every staged tx goes into the next block
            "blockNumber": to_quantity(block.number if block else self.node.head.number + 1)
            if index is not None else None,
            "transactionIndex": to_quantity(index) if index is not None else None,
            "from": to_data(sender),
            "to": to_data(tx.to) if tx.to is not None else None,
            "value": to_quantity(tx.value),
            "gas": to_quantity(tx.gas_limit),
            "gasPrice": to_quantity(tx.gas_price),
            "input": to_data(tx.data),
            "v": to_quantity(tx.v),
            "r": to_quantity(tx.r),
            "s": to_quantity(tx.s),
            "type": "0x0",
            "chainId": to_quantity(self.node.chain_id),
        }

    def _log_json(self, entry, receipt: Receipt, block: Optional[Block], log_index: int) -> dict:
        return {
            "address": to_data(entry.address),
            "topics": [to_data(t) for t in entry.topics],
            "data": to_data(entry.data),
            "blockNumber": to_quantity(block.number if block else self.node.head.number + 1),
            "blockHash": to_data(block.hash) if block else None,
            "transactionHash": to_data(receipt.tx_hash),
            "transactionIndex": to_quantity(receipt.transaction_index),
            "logIndex": to_quantity(log_index),
            "removed": False,
        }

    def _receipt_json(self, receipt: Receipt, block) -> dict:
        first_log = block.first_log_index if block is not None else 0
        proof = receipt.consensus_proof
        return {
            "transactionHash": to_data(receipt.tx_hash),
            "transactionIndex": to_quantity(receipt.transaction_index),
            "blockHash": to_data(block.hash) if block else None,
            "blockNumber": to_quantity(block.number if block else self.node.head.number + 1),
            "from": to_data(receipt.sender),
            "to": to_data(receipt.to) if receipt.to is not None else None,
            "cumulativeGasUsed": to_quantity(receipt.cumulative_gas_used),
            "gasUsed": to_quantity(receipt.gas_used),
            "effectiveGasPrice": to_quantity(receipt.gas_price),
            "contractAddress": to_data(receipt.contract_address) if receipt.contract_address else None,
            "logs": [self._log_json(e, receipt, block, first_log + i) for i, e in enumerate(receipt.logs)],
            "logsBloom": to_data(logs_bloom(_bloom_items([receipt]))),
            "status": to_quantity(receipt.status),
            "type": "0x0",
            "consensusProof": proof.to_json() if proof else None,
            "executedAt": to_quantity(receipt.executed_at_ns),
            "feeDlt": to_quantity(receipt.fee_dlt),
        }

    def _block_json(self, block: Block, full: bool) -> dict:
        header = block.header
        receipts = self.node.block_receipts(block) if block.transactions else []
        if full:
            txs = [self._tx_json(tx, block, i, receipts[i].sender) for i, tx in enumerate(block.transactions)]
        else:
            txs = [to_data(tx.hash) for tx in block.transactions]
        return {
            "number": to_quantity(header.number),
            "hash": to_data(block.hash),
            "parentHash": to_data(header.parent_hash),
            "nonce": "0x0000000000000000",
            "mixHash": to_data(ZERO_HASH),
            "sha3Uncles": to_data(EMPTY_UNCLES_HASH),
            "logsBloom": to_data(logs_bloom(_bloom_items(receipts))),
            "transactionsRoot": to_data(header.transactions_root),
            "stateRoot": to_data(header.state_root),
            "receiptsRoot": to_data(header.receipts_root),
            "miner": to_data(ZERO_ADDRESS),
            "difficulty": "0x0",
            "totalDifficulty": "0x0",
            "extraData": "0x",
            "size": to_quantity(len(block.encode())),
            "gasLimit": to_quantity(BLOCK_GAS_LIMIT),
            "gasUsed": to_quantity(receipts[-1].cumulative_gas_used if receipts else 0),
            "timestamp": to_quantity(header.timestamp),
            "transactions": txs,
            "uncles": [],
        }

    def _call_args(self, obj):
        if not isinstance(obj, dict):
            raise RpcError(INVALID_PARAMS, "call object expected")
        sender = _address(obj["from"]) if obj.get("from") else ZERO_ADDRESS
        to = _address(obj["to"]) if obj.get("to") else None
        data = _data(obj.get("data", obj.get("input")))
        value = _quantity(obj["value"]) if obj.get("value") is not None else 0
        gas = _quantity(obj["gas"]) if obj.get("gas") is not None else BLOCK_GAS_LIMIT
        return sender, to, data, value, gas

    # methods

    def web3_client_version(self):
        return self.client_version

    def web3_sha3(self, data):
        return to_data(keccak256(_data(data)))

    def net_version(self):
        return str(self.node.chain_id)

    def eth_chain_id(self):
        return to_quantity(self.node.chain_id)

    def eth_block_number(self):
        return to_quantity(self.node.head.number)

    def eth_gas_price(self):
        return to_quantity(self.node.config.gas_price_floor)

    def eth_get_balance(self, address, tag="latest"):
        return to_quantity(self._state(tag).get_balance(_address(address)))

    def eth_get_transaction_count(self, address, tag="latest"):
        return to_quantity(self._state(tag).get_nonce(_address(address)))

    def eth_get_code(self, address, tag="latest"):
        return to_data(self._state(tag).get_code(_address(address)))

    def eth_get_storage_at(self, address, slot, tag="latest"):
        value = self._state(tag).get_storage(_address(address), _quantity(slot))
        return to_data(value.to_bytes(32, "big"))

    def eth_get_block_by_number(self, tag, full=False):
        if tag in (None, "latest", "pending", "safe", "finalized"):
            number = self.node.head.number
        else:
            number = 0 if tag == "earliest" else _quantity(tag)
        block = self.node.get_block(number)
        return self._block_json(block, bool(full)) if block else None

    def eth_get_block_by_hash(self, block_hash, full=False):
        block = self.node.get_block_by_hash(_hash(block_hash))
        return self._block_json(block, bool(full)) if block else None

    def eth_get_block_tx_count(self, tag):
        return to_quantity(len(self._resolve_block(tag).transactions))

    def eth_get_transaction_by_hash(self, tx_hash):
        found = self.node.get_transaction(_hash(tx_hash))
        if found is None:
            return None
        tx, block, index = found
        try:
            sender = tx.sender(self.node.chain_id)
        except (InvalidSignature, MalformedTransaction):
            sender = ZERO_ADDRESS
        return self._tx_json(tx, block, index, sender)

    def eth_get_transaction_receipt(self, tx_hash):
        found = self.node.get_receipt(_hash(tx_hash))
        if found is None:
            return None
        return self._receipt_json(*found)

    def eth_call(self, obj, tag="latest"):
        sender, to, data, value, gas = self._call_args(obj)
        number = self._block_number(tag) if not isinstance(tag, dict) else None
        outcome = self.node.call(sender, to, data, value, gas, number)
        if not outcome.success:
            raise RpcError(SERVER_ERROR, f"execution {outcome.status}: {outcome.error or 'reverted'}",
                           to_data(outcome.return_data))
        return to_data(outcome.return_data)

    def eth_estimate_gas(self, obj, tag="latest"):
        sender, to, data, value, gas = self._call_args(obj)
        outcome = self.node.call(sender, to, data, value, gas, self._block_number(tag))
        if not outcome.success:
            raise RpcError(SERVER_ERROR, f"execution {outcome.status}: {outcome.error or 'reverted'}",
                           to_data(outcome.return_data))
        return to_quantity(outcome.gas_used + outcome.gas_used // 10)

    def eth_get_logs(self, filt):
        if not isinstance(filt, dict):
            raise RpcError(INVALID_PARAMS, "filter object expected")
        if filt.get("blockHash"):
            block = self.node.get_block_by_hash(_hash(filt["blockHash"]))
            if block is None:
                raise RpcError(SERVER_ERROR, "block not found")
            start = end = block.number
        else:
            head = self.node.head.number
            start = self._block_number(filt.get("fromBlock", "latest"))
            end = self._block_number(filt.get("toBlock", "latest"))
            start = head if start is None else start
            end = head if end is None else end
        addresses = filt.get("address")
        if isinstance(addresses, str):
            addresses = [addresses]
        addresses = {_address(a) for a in addresses} if addresses else None
        topics = []
        for t in filt.get("topics") or []:
            if t is None:
                topics.append(None)
            elif isinstance(t, list):
                topics.append({_hash(x) for x in t})
            else:
                topics.append({_hash(t)})
        out = []
        for number in range(start, end + 1):
            block = self.node.get_block(number)
            log_index = 0
            for receipt in self.node.block_receipts(block):
                for entry in receipt.logs:
                    if self._matches(entry, addresses, topics):
                        out.append(self._log_json(entry, receipt, block, log_index))
                    log_index += 1
        return out

    @staticmethod
    def _matches(entry, addresses, topics) -> bool:
        if addresses is not None and entry.address not in addresses:
            return False
        if len(topics) > len(entry.topics) and any(t is not None for t in topics[len(entry.topics):]):
            return False
        for want, have in zip(topics, entry.topics):
            if want is not None and have not in want:
                return False
        return True

    async def eth_send_raw_transaction(self, raw):
        try:
            payload = from_hex(raw)
        except (ValueError, TypeError):
            raise RpcError(INVALID_PARAMS, "raw transaction must be 0x-prefixed hex") from None
        try:
            tx_hash = await self.node.ingest(payload)
        except MalformedTransaction as exc:
            raise RpcError(INVALID_PARAMS, f"malformed transaction: {exc}") from None
        except GasPriceBelowFloor as exc:
            raise RpcError(SERVER_ERROR, f"gas price below floor: {exc}") from None
        except InvalidSignature as exc:
            raise RpcError(SERVER_ERROR, f"invalid signature: {exc}") from None
        except GasLimitBelowIntrinsic as exc:
            raise RpcError(SERVER_ERROR, f"intrinsic gas too low: {exc}") from None
        except CaasUnreachable as exc:
            raise RpcError(SERVER_ERROR, f"consensus service unreachable: {exc}") from None
        except NodeHalted as exc:
            raise RpcError(SERVER_ERROR, f"node halted: {exc}") from None
        return to_data(tx_hash)


CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "POST, OPTIONS",
    "Access-Control-Allow-Headers": "Content-Type",
}


def rpc_app(dispatcher: RpcDispatcher) -> web.Application:
    async def post(request: web.Request):
        response = await dispatcher.handle_raw(await request.read())
        return web.json_response(response, headers=CORS_HEADERS)

    async def options(request: web.Request):
        return web.Response(headers=CORS_HEADERS)

    app = web.Application(client_max_size=8 * 1024 * 1024)
    app.router.add_post("/", post)
    app.router.add_route("OPTIONS", "/", options)
    return app
