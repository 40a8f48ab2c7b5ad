"""
The running hash as an audit trail
==================================

Each message on a topic extends a hash chain.  Changing any stored payload
breaks the chain from that record onward, which audit_fetch reports.
"""
import asyncio

from caaschain import ConsensusService, MockBackend, PrivateKey, keccak256
from caaschain.caas.service import TamperDetected
from caaschain.state.kv import CAAS_MESSAGES
from caaschain.types import Transaction

alice = PrivateKey(keccak256(b"alice"))


async def main():
    service = ConsensusService(MockBackend())
    await service.register_network("demo")
    raws = [Transaction(i, 10**9, 21000, b"\x01" * 20, 1, b"").sign(alice, 1337).encode() for i in range(20)]
    for raw in raws:
        await service.submit_transaction("demo", raw)
    while service.message_count("demo") < 20:
        await asyncio.sleep(0.01)

    record = service.audit_fetch("demo", keccak256(raws[7]))
    print("record 8 verifies:", record.proof.sequence_number, record.proof.running_hash.hex()[:16], "...")

    # flip one bit of the 8th stored payload
    key = [k for k, _ in service.store.iterate(CAAS_MESSAGES)][7]
    stored = bytearray(service.store.get(CAAS_MESSAGES, key))
    stored[stored.index(raws[7]) + 3] ^= 1
    service.store.put(CAAS_MESSAGES, key, bytes(stored))

    print("first broken link:", service.verify_topic("demo"))
    try:
        service.audit_fetch("demo", keccak256(raws[12]))
    except TamperDetected as exc:
        print("audit of record 13 fails:", exc)
    service.audit_fetch("demo", keccak256(raws[6]))
    print("records before the change still verify")
    await service.close()


asyncio.run(main())
