from caaschain.evm import ExecutionContext, interpret

SENDER = b"\x11" * 20
CONTRACT = b"\x22" * 20


class DictHost:
    def __init__(self, storage=None):
        self.storage = dict(storage or {})

    def get_storage(self, address, slot):
        return self.storage.get(slot, 0)

    def set_storage(self, address, slot, value):
        self.storage[slot] = value


def run_both(code, gas, data=b"", value=7, storage=None):
    """Run ``code`` under the interpreter and the reference evaluator."""
    from oracles.reference_evm import run

    host = DictHost(storage)
    got = interpret(code, ExecutionContext(SENDER, CONTRACT, value, data, gas, host))
    ref = run(code, gas=gas, sender=SENDER, value=value, data=data, storage=storage, address=CONTRACT)
    return got, host, ref


def same_outcome(got, host, ref) -> bool:
    logs = [(log.address, tuple(log.topics), log.data) for log in got.logs]
    if (got.status, got.gas_used, got.return_data, logs) != (ref["status"], ref["gas_used"], ref["output"], ref["logs"]):
        return False
    if got.status == "success":
        return host.storage == ref["storage"] and list(got.stack) == ref["stack"]
    return True
