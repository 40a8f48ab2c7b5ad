import json
import time

import aiohttp
import pytest
from web3 import Web3

from caaschain.evm import abi
from caaschain.evm.natives import reserved_address
from caaschain.node import NativeSpec
from caaschain.rpc.client import HttpRpcClient, LocalRpcClient, RpcCallError
from caaschain.rpc.server import UNSUPPORTED_MESSAGE, UNSUPPORTED_METHODS
from caaschain.stack import BackgroundStack
from caaschain.types import ETHER, GWEI, from_hex, to_data

from conftest import ALICE, BOB, CAROL, CHAIN_ID, arun, config, signed, spawn, wait_until

TOKEN = reserved_address(0)


def token_config(**kw):
    natives = [NativeSpec("token", TOKEN, {"name": "Alice Token", "symbol": "ATK",
                                           "initial_balances": {ALICE.address: 500}})]
    return config(natives=natives, block_interval=0.2, **kw)


@pytest.fixture(scope="module")
def bg():
    with BackgroundStack([token_config()], transport="http") as stack:
        yield stack


@pytest.fixture(scope="module")
def w3(bg):
    return Web3(Web3.HTTPProvider(bg.stack.nodes["net-1"].rpc_url))


def raw_call(bg, body):
    async def go():
        async with aiohttp.ClientSession() as session:
            async with session.post(bg.stack.nodes["net-1"].rpc_url, data=json.dumps(body)) as resp:
                return resp.headers, await resp.json()
    return bg.run(go())


def rpc(bg, method, *params):
    _, body = raw_call(bg, {"jsonrpc": "2.0", "id": 1, "method": method, "params": list(params)})
    return body


def test_web3_reads(w3):
    assert w3.is_connected()
    assert w3.eth.chain_id == CHAIN_ID
    assert w3.eth.get_balance(Web3.to_checksum_address(BOB.address)) >= 999 * ETHER
    assert w3.eth.gas_price == GWEI
    block = w3.eth.get_block("latest")
    assert block["number"] == w3.eth.block_number


def test_web3_send_and_poll(w3):
    sender = Web3.to_checksum_address(ALICE.address)
    nonce = w3.eth.get_transaction_count(sender)
    tx = signed(ALICE, nonce, CAROL.address, 12345)
    tx_hash = w3.eth.send_raw_transaction(tx.encode())
    assert bytes(tx_hash) == tx.hash
    receipt = w3.eth.wait_for_transaction_receipt(tx_hash, timeout=20, poll_latency=0.05)
    assert receipt["status"] == 1
    assert receipt["gasUsed"] == 21000
    assert receipt["consensusProof"]["topicId"]
    assert w3.eth.get_balance(Web3.to_checksum_address(CAROL.address)) >= 12345
    assert w3.eth.get_transaction_count(sender) == nonce + 1
    fetched = w3.eth.get_transaction(tx_hash)
    assert fetched["blockNumber"] == receipt["blockNumber"]
    assert fetched["value"] == 12345
    deadline = time.monotonic() + 10
    while w3.eth.block_number < receipt["blockNumber"] and time.monotonic() < deadline:
        time.sleep(0.05)
    block = w3.eth.get_block(receipt["blockNumber"])
    assert bytes(tx_hash) in [bytes(h) for h in block["transactions"]]


def test_web3_token_call(w3):
    contract = w3.eth.contract(address=Web3.to_checksum_address(TOKEN), abi=[
        {"name": "balanceOf", "type": "function", "stateMutability": "view",
         "inputs": [{"name": "owner", "type": "address"}], "outputs": [{"name": "", "type": "uint256"}]},
        {"name": "symbol", "type": "function", "stateMutability": "view",
         "inputs": [], "outputs": [{"name": "", "type": "string"}]},
    ])
    assert contract.functions.balanceOf(Web3.to_checksum_address(ALICE.address)).call() == 500
    assert contract.functions.symbol().call() == "ATK"


@pytest.mark.parametrize("method", sorted(UNSUPPORTED_METHODS))
def test_unsupported_methods(bg, method):
    body = rpc(bg, method)
    assert body["error"]["code"] == -32601
    assert body["error"]["message"] == UNSUPPORTED_MESSAGE


def test_unknown_method_is_plain_not_found(bg):
    body = rpc(bg, "eth_frobnicate")
    assert body["error"]["code"] == -32601
    assert body["error"]["message"] != UNSUPPORTED_MESSAGE


def test_invalid_params_and_floor(bg):
    assert rpc(bg, "eth_sendRawTransaction", "0xzz")["error"]["code"] == -32602
    assert rpc(bg, "eth_getBalance", "0x1234")["error"]["code"] == -32602
    cheap = signed(BOB, 0, CAROL.address, 1, gas_price=GWEI - 1)
    body = rpc(bg, "eth_sendRawTransaction", to_data(cheap.encode()))
    assert body["error"]["code"] == -32000
    assert body["error"]["message"].startswith("gas price below floor")
    _, body = raw_call(bg, {"jsonrpc": "2.0", "id": 1})
    assert body["error"]["code"] == -32600


def test_batch_and_cors(bg):
    headers, body = raw_call(bg, [
        {"jsonrpc": "2.0", "id": 1, "method": "eth_chainId", "params": []},
        {"jsonrpc": "2.0", "id": 2, "method": "eth_mining", "params": []},
        {"jsonrpc": "2.0", "id": 3, "method": "net_version", "params": []},
    ])
    by_id = {r["id"]: r for r in body}
    assert by_id[1]["result"] == hex(CHAIN_ID)
    assert by_id[2]["error"]["code"] == -32601
    assert by_id[3]["result"] == str(CHAIN_ID)
    assert headers["Access-Control-Allow-Origin"] == "*"


def test_eth_call_mutates_nothing(bg):
    node = bg.stack.nodes["net-1"].node
    root = bg.call(lambda: node.state_root)
    count = bg.call(bg.stack.service.message_count, "net-1")
    transfer = abi.encode_call("transfer(address,uint256)", BOB.address, 100)
    call = {"from": to_data(ALICE.address), "to": to_data(TOKEN), "data": to_data(transfer)}
    assert int(rpc(bg, "eth_call", call, "latest")["result"], 16) == 1
    value_call = {"from": to_data(ALICE.address), "to": to_data(CAROL.address), "value": hex(ETHER)}
    assert rpc(bg, "eth_call", value_call)["result"] == "0x"
    assert bg.call(lambda: node.state_root) == root
    assert bg.call(bg.stack.service.message_count, "net-1") == count
    balance = abi.encode_call("balanceOf(address)", BOB.address)
    out = rpc(bg, "eth_call", {"to": to_data(TOKEN), "data": to_data(balance)}, "pending")["result"]
    assert int(out, 16) == 0


def test_estimate_gas_margin(bg):
    body = rpc(bg, "eth_estimateGas", {"from": to_data(ALICE.address), "to": to_data(CAROL.address), "value": "0x1"})
    assert int(body["result"], 16) == 21000 + 2100
    bad = rpc(bg, "eth_estimateGas", {"from": to_data(CAROL.address), "to": to_data(TOKEN),
                                      "data": to_data(abi.encode_call("transfer(address,uint256)", BOB.address, 1))})
    assert bad["error"]["code"] == -32000


def test_receipts_logs_and_proofs():
    async def go():
        stack = await spawn(token_config())
        try:
            handle = stack.nodes["net-1"]
            client = LocalRpcClient(handle.rpc)
            assert await client.call("eth_getTransactionReceipt", to_data(b"\x11" * 32)) is None
            data = abi.encode_call("transfer(address,uint256)", BOB.address, 7)
            txs = [signed(ALICE, 0, TOKEN, data=data, gas=100_000), signed(ALICE, 1, CAROL.address, 5)]
            for tx in txs:
                await client.call("eth_sendRawTransaction", to_data(tx.encode()))
            await wait_until(lambda: handle.node.state.get_nonce(ALICE.address) == 2)
            pending = await client.call("eth_getTransactionReceipt", to_data(txs[1].hash))
            assert pending["blockHash"] is None and pending["blockNumber"] == "0x1"
            assert pending["gasUsed"] == "0x5208"
            handle.node.cut_block(force=True)
            receipts = [await client.call("eth_getTransactionReceipt", to_data(tx.hash)) for tx in txs]
            assert all(r["blockNumber"] == "0x1" for r in receipts)
            logs = await client.call("eth_getLogs", {"fromBlock": "0x0", "toBlock": "latest",
                                                     "address": to_data(TOKEN)})
            assert len(logs) == 1 and logs[0]["transactionHash"] == to_data(txs[0].hash)
            assert int.from_bytes(from_hex(logs[0]["data"]), "big") == 7
            for tx, r in zip(txs, receipts):
                record = stack.service.audit_fetch("net-1", tx.hash)
                proof = r["consensusProof"]
                assert record.proof.to_json() == proof
                assert record.payload == tx.encode()
            full = await client.call("eth_getBlockByNumber", "0x1", True)
            assert [t["hash"] for t in full["transactions"]] == [to_data(t.hash) for t in txs]
            assert await client.call("eth_getBlockByNumber", "0x5", False) is None
            with pytest.raises(RpcCallError):
                await client.call("eth_getBalance", to_data(ALICE.address), "0x9")
        finally:
            await stack.close()
    arun(go())


def test_http_client_round_trip(bg):
    async def go():
        client = HttpRpcClient(bg.stack.nodes["net-1"].rpc_url)
        try:
            return await client.call("eth_chainId")
        finally:
            await client.close()
    assert bg.run(go()) == hex(CHAIN_ID)
