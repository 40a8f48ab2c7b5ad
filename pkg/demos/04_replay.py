"""
Replaying the confirmation journal
==================================

A node records every confirmation it applies and every block it cuts.
Re-executing that journal on an empty store rebuilds the same blocks.
"""
import asyncio

from caaschain import NodeConfig, PrivateKey, Stack, keccak256, replay
from caaschain.types import ETHER, Transaction

alice, bob = PrivateKey(keccak256(b"alice")), PrivateKey(keccak256(b"bob"))


async def main():
    config = NodeConfig(network_id="demo", genesis={alice.address: ETHER}, block_interval=0.05)
    stack = await Stack.spawn([config], timer_tick=0.01)
    node = stack.node("demo")
    for i in range(30):
        tx = Transaction(i, 10**9, 21000, bob.address, 1000 + i, b"").sign(alice, config.chain_id)
        await node.ingest(tx.encode())
        await asyncio.sleep(0.01)
    while node.watermark.sequence_number < 30:
        await asyncio.sleep(0.01)
    node.cut_block(force=True)

    blocks = {b.number: b.hash for b in node.blocks()}
    copy = replay(config, node.journal(), expected_blocks=blocks, expected_root=node.state_root)
    print(f"{len(blocks)} blocks replayed, head {copy.head.hash.hex()[:16]}... matches {node.head.hash.hex()[:16]}...")
    print("state roots equal:", copy.state_root == node.state_root)
    await stack.close()


asyncio.run(main())
