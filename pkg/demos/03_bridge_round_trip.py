"""
Lock, mint, burn, withdraw
==========================

Two networks share one consensus service.  A token on the origin chain is
locked in a bridge contract, the mediator mints the same amount on the
destination, and the reverse trip burns it and releases the original.
"""
import asyncio

from caaschain import PrivateKey, Stack, keccak256
from caaschain.bridge.mediator import ChainEndpoint, Mediator
from caaschain.evm import abi
from caaschain.evm.natives import reserved_address
from caaschain.node import NativeSpec, NodeConfig
from caaschain.rpc.client import LocalRpcClient
from caaschain.types import ETHER, Transaction, to_data

TOKEN, BRIDGE = reserved_address(0), reserved_address(1)
alice = PrivateKey(keccak256(b"alice"))
relayer = PrivateKey(keccak256(b"mediator"))


def chain(name, chain_id, bridge_kind, balances):
    natives = [NativeSpec("token", TOKEN, {"name": name, "symbol": name[:3].upper(), "bridge": BRIDGE,
                                           "initial_balances": balances}),
               NativeSpec(bridge_kind, BRIDGE, {"token": TOKEN, "relayer": relayer.address})]
    genesis = {alice.address: ETHER, relayer.address: ETHER}
    return NodeConfig(chain_id=chain_id, network_id=name, genesis=genesis, natives=natives, block_interval=0.1)


async def main():
    stack = await Stack.spawn([chain("origin", 1, "bridge-origin", {alice.address: 1000}),
                               chain("destination", 2, "bridge-dest", {})], timer_tick=0.02)
    rpc = {n: LocalRpcClient(stack.nodes[n].rpc) for n in ("origin", "destination")}
    mediator = Mediator(ChainEndpoint("origin", rpc["origin"], BRIDGE),
                        ChainEndpoint("destination", rpc["destination"], BRIDGE), relayer, poll_interval=0.1)
    stop = asyncio.Event()
    relaying = asyncio.create_task(mediator.run(stop))
    nonces = {"origin": 0, "destination": 0}

    async def send(side, signature, *args):
        tx = Transaction(nonces[side], 10**9, 200_000, BRIDGE, 0, abi.encode_call(signature, *args))
        nonces[side] += 1
        await rpc[side].call("eth_sendRawTransaction", to_data(tx.sign(alice, 1 if side == "origin" else 2).encode()))

    async def balances():
        out = []
        for side in ("origin", "destination"):
            data = abi.encode_call("balanceOf(address)", alice.address)
            out.append(int(await rpc[side].call("eth_call", {"to": to_data(TOKEN), "data": to_data(data)}), 16))
        return tuple(out)

    async def settle(want):
        while await balances() != want:
            await asyncio.sleep(0.05)
        print("origin / destination balance:", want)

    print("start:", await balances())
    await send("origin", "lock(address,uint256)", alice.address, 250)
    await settle((750, 250))
    await send("destination", "burn(address,uint256)", alice.address, 250)
    await settle((1000, 0))
    while await mediator.settle():
        await asyncio.sleep(0.05)
    print("mediator:", mediator.status())
    stop.set()
    await relaying
    await stack.close()


asyncio.run(main())
