"""Two chains on one consensus service with a token bridge between them."""
import asyncio
from collections import defaultdict

from caaschain.bridge import mediator as mediator_mod
from caaschain.bridge.contracts import BURN_TOPIC, DEPOSIT_TOPIC, MINT_TOPIC, WITHDRAW_TOPIC
from caaschain.bridge.mediator import ChainEndpoint, Mediator
from caaschain.evm import abi
from caaschain.evm.natives import reserved_address
from caaschain.node import NativeSpec
from caaschain.primitives import PrivateKey, keccak256
from caaschain.rpc.client import LocalRpcClient
from caaschain.types import ETHER, from_hex, to_data

from conftest import ALICE, BOB, config, signed, spawn, wait_until

TOKEN = reserved_address(0)
BRIDGE = reserved_address(1)
RELAYER = PrivateKey(keccak256(b"mediator"))
USER_GAS = 200_000


def chain_config(side, token_balances):
    bridge_kind = "bridge-origin" if side == "origin" else "bridge-dest"
    natives = [
        NativeSpec("token", TOKEN, {"name": f"{side} token", "symbol": side[:3].upper(), "bridge": BRIDGE,
                                    "initial_balances": token_balances}),
        NativeSpec(bridge_kind, BRIDGE, {"token": TOKEN, "relayer": RELAYER.address}),
    ]
    genesis = {ALICE.address: 1000 * ETHER, BOB.address: 1000 * ETHER, RELAYER.address: 1000 * ETHER}
    return config(side, natives=natives, genesis=genesis, chain_id=1 if side == "origin" else 2)


class BridgeEnv:
    def __init__(self, stack):
        self.stack = stack
        self.rpc = {side: LocalRpcClient(stack.nodes[side].rpc) for side in ("origin", "destination")}
        self.nonces = defaultdict(int)

    @classmethod
    async def create(cls, origin_balances=None, dest_balances=None):
        origin = chain_config("origin", origin_balances if origin_balances is not None else {ALICE.address: 1000})
        dest = chain_config("destination", dest_balances or {})
        return cls(await spawn(origin, dest))

    def node(self, side):
        return self.stack.nodes[side].node

    def mediator(self, store=None, rpc=None):
        rpc = rpc or self.rpc
        return Mediator(ChainEndpoint("origin", rpc["origin"], BRIDGE), ChainEndpoint("destination", rpc["destination"], BRIDGE),
                        RELAYER, store=store)

    async def send(self, side, key, to, data, gas=USER_GAS):
        tx = signed(key, self.nonces[(side, key.address)], to, data=data, gas=gas, chain_id=self.node(side).chain_id)
        self.nonces[(side, key.address)] += 1
        await self.rpc[side].call("eth_sendRawTransaction", to_data(tx.encode()))
        node = self.node(side)
        await wait_until(lambda: node.get_receipt(tx.hash) is not None)
        return node.get_receipt(tx.hash)[0]

    async def lock(self, key, amount, receiver=None):
        data = abi.encode_call("lock(address,uint256)", (receiver or key).address, amount)
        return await self.send("origin", key, BRIDGE, data)

    async def burn(self, key, amount, receiver=None):
        data = abi.encode_call("burn(address,uint256)", (receiver or key).address, amount)
        return await self.send("destination", key, BRIDGE, data)

    async def view(self, side, to, signature, *args):
        out = await self.rpc[side].call("eth_call", {"to": to_data(to), "data": to_data(abi.encode_call(signature, *args))})
        return int(out, 16)

    async def balance(self, side, key):
        return await self.view(side, TOKEN, "balanceOf(address)", key.address)

    async def totals(self):
        return {
            "locked": await self.view("origin", BRIDGE, "lockedTotal()"),
            "minted": await self.view("destination", BRIDGE, "mintedTotal()"),
            "burned": await self.view("destination", BRIDGE, "burnedTotal()"),
            "dest_supply": await self.view("destination", TOKEN, "totalSupply()"),
        }

    def cut(self):
        for side in ("origin", "destination"):
            self.node(side).cut_block(force=True)

    async def drain(self, mediator, rounds=200):
        """Cut blocks and step the mediator until nothing is left to relay."""
        for _ in range(rounds):
            self.cut()
            relayed = await mediator.step()
            open_relays = [r for r in mediator.relays.values() if r.state not in (mediator_mod.DONE, mediator_mod.FAILED)]
            if not relayed and not open_relays and all(not self.node(s).staged for s in ("origin", "destination")):
                return
            await asyncio.sleep(0.005)
        raise TimeoutError("bridge did not settle")

    async def logs(self, side, topic):
        return await self.rpc[side].call("eth_getLogs", {"fromBlock": "0x0", "toBlock": "latest",
                                                          "address": to_data(BRIDGE), "topics": [to_data(topic)]})

    async def event_counts(self):
        return {
            "deposits": len(await self.logs("origin", DEPOSIT_TOPIC)),
            "mints": len(await self.logs("destination", MINT_TOPIC)),
            "burns": len(await self.logs("destination", BURN_TOPIC)),
            "withdraws": len(await self.logs("origin", WITHDRAW_TOPIC)),
        }


def log_amount(entry):
    return int.from_bytes(from_hex(entry["data"]), "big")
