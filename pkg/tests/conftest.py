import asyncio
import re
import time

import pytest

from caaschain.node import NodeConfig
from caaschain.primitives import PrivateKey, keccak256
from caaschain.stack import Stack
from caaschain.types import ETHER, GWEI, Transaction

ALICE = PrivateKey(keccak256(b"alice"))
BOB = PrivateKey(keccak256(b"bob"))
CAROL = PrivateKey(keccak256(b"carol"))
CHAIN_ID = 1337


def arun(coro, timeout=120):
    return asyncio.run(asyncio.wait_for(coro, timeout))


def signed(key, nonce, to, value=0, data=b"", *, gas=21000, gas_price=GWEI, chain_id=CHAIN_ID) -> Transaction:
    return Transaction(nonce, gas_price, gas, to, value, data).sign(key, chain_id)


def config(network_id="net-1", **kw) -> NodeConfig:
    kw.setdefault("genesis", {ALICE.address: 1000 * ETHER, BOB.address: 1000 * ETHER})
    kw.setdefault("block_interval", 3600.0)
    return NodeConfig(chain_id=kw.pop("chain_id", CHAIN_ID), network_id=network_id, **kw)


async def wait_until(predicate, timeout=10.0, poll=0.005):
    deadline = time.monotonic() + timeout
    while not predicate():
        if time.monotonic() > deadline:
            raise TimeoutError("condition not reached")
        await asyncio.sleep(poll)


async def spawn(*configs, **kw) -> Stack:
    return await Stack.spawn(list(configs) or [config()], **kw)


@pytest.fixture
def rng_seed():
    return 20240501


# one PASS/FAIL line per acceptance criterion in the terminal summary

_CRITERIA = {}
_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+?)(\[|$)")


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if match is None or "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or report.failed or report.skipped:
        key = (int(match.group(1)), match.group(2))
        _CRITERIA[key] = _CRITERIA.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number:2d} {name.replace('_', ' ')}: {'PASS' if ok else 'FAIL'}")
