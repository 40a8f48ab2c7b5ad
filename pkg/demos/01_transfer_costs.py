"""
Sending a transfer and pricing it
=================================

Spawn a consensus service and one node in this process, send a plain
transfer over JSON-RPC, and break its cost into gas and ordering fees.
"""
import asyncio

from caaschain.bench.reports import cost_table, finality_table
from caaschain.bench.runner import bench_genesis, run_transfer
from caaschain.node import NodeConfig
from caaschain.rpc.client import LocalRpcClient
from caaschain.stack import Stack


async def main():
    # one network, funded bench account, blocks every half second
    stack = await Stack.spawn([NodeConfig(network_id="demo", genesis=bench_genesis(), block_interval=0.5)])
    rpc = LocalRpcClient(stack.nodes["demo"].rpc)

    # five transfers at 1 gwei; the wallet poll watches each recipient's balance
    costs, finality = await run_transfer(rpc, count=5, gas_price=10**9, wallet_poll=0.05)
    print(cost_table(costs[0]))
    print()
    print(finality_table(finality))

    # every receipt carries the ordering proof from the consensus service
    receipt = await rpc.call("eth_getTransactionReceipt", costs[0].tx_hash)
    print()
    print("consensus proof:", receipt["consensusProof"])
    await stack.close()


asyncio.run(main())
