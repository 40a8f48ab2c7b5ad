"""
An unmodified Web3 client
=========================

The node speaks standard Ethereum JSON-RPC, so web3.py can send and read
without any plugin.  Mining methods answer with an explanatory error.
"""
from web3 import Web3

from caaschain import BackgroundStack, NodeConfig, PrivateKey, keccak256
from caaschain.types import ETHER, Transaction

alice, bob = PrivateKey(keccak256(b"alice")), PrivateKey(keccak256(b"bob"))

config = NodeConfig(network_id="demo", genesis={alice.address: ETHER}, block_interval=0.2)
with BackgroundStack([config], transport="http") as bg:
    w3 = Web3(Web3.HTTPProvider(bg.stack.nodes["demo"].rpc_url))
    print("chain id", w3.eth.chain_id, "gas price", w3.eth.gas_price)

    tx = Transaction(0, w3.eth.gas_price, 21000, bob.address, 10**15, b"").sign(alice, w3.eth.chain_id)
    receipt = w3.eth.wait_for_transaction_receipt(w3.eth.send_raw_transaction(tx.encode()))
    print("status", receipt["status"], "gas", receipt["gasUsed"], "sequence", receipt["consensusProof"]["sequenceNumber"])
    print("bob has", w3.eth.get_balance(Web3.to_checksum_address(bob.address)), "wei")
    print("eth_mining ->", w3.provider.make_request("eth_mining", [])["error"])
