"""Bytecode interpreter for the supported EVM opcode subset.

Jump destinations and push immediates are decoded once per distinct code
blob and cached.  Failure rules: stack underflow/overflow, bad jumps and
unknown opcodes end in ``invalid``; insufficient gas ends in ``out_of_gas``;
both consume all gas.  Stack checks run before gas is charged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Protocol, Tuple

from ..types import Log

MASK = (1 << 256) - 1
STACK_LIMIT = 1024

SUCCESS = "success"
REVERT = "revert"
OUT_OF_GAS = "out_of_gas"
INVALID = "invalid"

G_SLOAD = 800
G_SSTORE_SET = 20000
G_SSTORE_RESET = 5000
G_LOG = 375
G_LOG_TOPIC = 375
G_LOG_BYTE = 8
G_MEMORY = 3
G_QUAD_DIVISOR = 512

STOP, ADD, MUL, SUB, DIV = 0x00, 0x01, 0x02, 0x03, 0x04
LT, GT, EQ, ISZERO, AND, OR, XOR, NOT = 0x10, 0x11, 0x14, 0x15, 0x16, 0x17, 0x18, 0x19
CALLER, CALLVALUE, CALLDATALOAD, CALLDATASIZE = 0x33, 0x34, 0x35, 0x36
POP, MLOAD, MSTORE, SLOAD, SSTORE, JUMP, JUMPI, PC, JUMPDEST = 0x50, 0x51, 0x52, 0x54, 0x55, 0x56, 0x57, 0x58, 0x5B
PUSH1, PUSH32, DUP1, DUP16, SWAP1, SWAP16 = 0x60, 0x7F, 0x80, 0x8F, 0x90, 0x9F
LOG0, LOG4 = 0xA0, 0xA4
RETURN, REVERT_OP = 0xF3, 0xFD

# (stack items consumed, static gas)
OPCODES = {
    STOP: (0, 0), ADD: (2, 3), MUL: (2, 5), SUB: (2, 3), DIV: (2, 5),
    LT: (2, 3), GT: (2, 3), EQ: (2, 3), ISZERO: (1, 3), AND: (2, 3), OR: (2, 3), XOR: (2, 3), NOT: (1, 3),
    CALLER: (0, 2), CALLVALUE: (0, 2), CALLDATALOAD: (1, 3), CALLDATASIZE: (0, 2),
    POP: (1, 2), MLOAD: (1, 3), MSTORE: (2, 3), SLOAD: (1, G_SLOAD), SSTORE: (2, 0),
    JUMP: (1, 8), JUMPI: (2, 10), PC: (0, 2), JUMPDEST: (0, 1),
    RETURN: (2, 0), REVERT_OP: (2, 0),
}
for _op in range(PUSH1, PUSH32 + 1):
    OPCODES[_op] = (0, 3)
for _i, _op in enumerate(range(DUP1, DUP16 + 1)):
    OPCODES[_op] = (_i + 1, 3)
for _i, _op in enumerate(range(SWAP1, SWAP16 + 1)):
    OPCODES[_op] = (_i + 2, 3)
for _i, _op in enumerate(range(LOG0, LOG4 + 1)):
    OPCODES[_op] = (_i + 2, G_LOG + G_LOG_TOPIC * _i)

NAMES = {
    STOP: "STOP", ADD: "ADD", MUL: "MUL", SUB: "SUB", DIV: "DIV", LT: "LT", GT: "GT", EQ: "EQ",
    ISZERO: "ISZERO", AND: "AND", OR: "OR", XOR: "XOR", NOT: "NOT", CALLER: "CALLER",
    CALLVALUE: "CALLVALUE", CALLDATALOAD: "CALLDATALOAD", CALLDATASIZE: "CALLDATASIZE", POP: "POP",
    MLOAD: "MLOAD", MSTORE: "MSTORE", SLOAD: "SLOAD", SSTORE: "SSTORE", JUMP: "JUMP", JUMPI: "JUMPI",
    PC: "PC", JUMPDEST: "JUMPDEST", RETURN: "RETURN", REVERT_OP: "REVERT",
}
NAMES.update({op: f"PUSH{op - PUSH1 + 1}" for op in range(PUSH1, PUSH32 + 1)})
NAMES.update({op: f"DUP{op - DUP1 + 1}" for op in range(DUP1, DUP16 + 1)})
NAMES.update({op: f"SWAP{op - SWAP1 + 1}" for op in range(SWAP1, SWAP16 + 1)})
NAMES.update({op: f"LOG{op - LOG0}" for op in range(LOG0, LOG4 + 1)})


def memory_cost(words: int) -> int:
    return G_MEMORY * words + words * words // G_QUAD_DIVISOR


class Host(Protocol):
    def get_storage(self, address: bytes, slot: int) -> int: ...

    def set_storage(self, address: bytes, slot: int, value: int) -> None: ...


@dataclass
class ExecutionContext:
    sender: bytes
    recipient: bytes
    value: int
    data: bytes
    gas: int
    host: Host
    block_number: int = 0
    timestamp: int = 0
    chain_id: int = 1


@dataclass
class ExecutionOutcome:
    status: str
    gas_used: int
    return_data: bytes = b""
    logs: Tuple[Log, ...] = ()
    stack: Tuple[int, ...] = ()
    error: str = ""
    state_delta: Optional[object] = field(default=None, compare=False)

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


@lru_cache(maxsize=1024)
def analyze(code: bytes) -> Tuple[frozenset, Tuple[int, ...]]:
    """Return (valid jump destinations, immediate value per pc or -1)."""
    jumpdests = set()
    immediates = [-1] * len(code)
    pc = 0
    n = len(code)
    while pc < n:
        op = code[pc]
        if PUSH1 <= op <= PUSH32:
            size = op - PUSH1 + 1
            chunk = code[pc + 1:pc + 1 + size]
            immediates[pc] = int.from_bytes(chunk.ljust(size, b"\x00"), "big")
            pc += size + 1
            continue
        if op == JUMPDEST:
            jumpdests.add(pc)
        pc += 1
    return frozenset(jumpdests), tuple(immediates)


class _Halt(Exception):
    def __init__(self, status: str, error: str):
        self.status = status
        self.error = error


def interpret(code: bytes, ctx: ExecutionContext) -> ExecutionOutcome:
    gas_limit = ctx.gas
    if not code:
        return ExecutionOutcome(SUCCESS, 0)
    jumpdests, immediates = analyze(bytes(code))
    stack: List[int] = []
    memory = bytearray()
    logs: List[Log] = []
    gas = gas_limit
    pc = 0
    n = len(code)
    opcodes = OPCODES
    push = stack.append
    pop = stack.pop

    def expand(offset: int, size: int) -> None:
        nonlocal gas
        if size == 0:
            return
        end = offset + size
        new_words = (end + 31) // 32
        old_words = len(memory) // 32
        if new_words > old_words:
            cost = memory_cost(new_words) - memory_cost(old_words)
            if cost > gas:
                raise _Halt(OUT_OF_GAS, "memory expansion")
            gas -= cost
            memory.extend(bytes(new_words * 32 - len(memory)))

    try:
        while pc < n:
            op = code[pc]
            spec = opcodes.get(op)
            if spec is None:
                raise _Halt(INVALID, f"invalid opcode 0x{op:02x}")
            need, static = spec
            if len(stack) < need:
                raise _Halt(INVALID, "stack underflow")
            if static > gas:
                raise _Halt(OUT_OF_GAS, NAMES[op])
            gas -= static

            if PUSH1 <= op <= PUSH32:
                if len(stack) >= STACK_LIMIT:
                    raise _Halt(INVALID, "stack overflow")
                push(immediates[pc])
                pc += op - PUSH1 + 2
                continue
            if op == ADD:
                push((pop() + pop()) & MASK)
            elif op == SUB:
                a = pop()
                push((a - pop()) & MASK)
            elif op == MUL:
                push((pop() * pop()) & MASK)
            elif op == DIV:
                a = pop()
                b = pop()
                push(a // b if b else 0)
            elif op == LT:
                a = pop()
                push(1 if a < pop() else 0)
            elif op == GT:
                a = pop()
                push(1 if a > pop() else 0)
            elif op == EQ:
                push(1 if pop() == pop() else 0)
            elif op == ISZERO:
                push(1 if pop() == 0 else 0)
            elif op == AND:
                push(pop() & pop())
            elif op == OR:
                push(pop() | pop())
            elif op == XOR:
                push(pop() ^ pop())
            elif op == NOT:
                push(MASK ^ pop())
            elif DUP1 <= op <= DUP16:
                if len(stack) >= STACK_LIMIT:
                    raise _Halt(INVALID, "stack overflow")
                push(stack[-(op - DUP1 + 1)])
            elif SWAP1 <= op <= SWAP16:
                depth = op - SWAP1 + 2
                stack[-1], stack[-depth] = stack[-depth], stack[-1]
            elif op == POP:
                pop()
            elif op == JUMPDEST:
                pass
            elif op == JUMP:
                dest = pop()
                if dest not in jumpdests:
                    raise _Halt(INVALID, "bad jump destination")
                pc = dest
                continue
            elif op == JUMPI:
                dest = pop()
                cond = pop()
                if cond:
                    if dest not in jumpdests:
                        raise _Halt(INVALID, "bad jump destination")
                    pc = dest
                    continue
            elif op == PC:
                if len(stack) >= STACK_LIMIT:
                    raise _Halt(INVALID, "stack overflow")
                push(pc)
            elif op == CALLER or op == CALLVALUE or op == CALLDATASIZE:
                if len(stack) >= STACK_LIMIT:
                    raise _Halt(INVALID, "stack overflow")
                if op == CALLER:
                    push(int.from_bytes(ctx.sender, "big"))
                elif op == CALLVALUE:
                    push(ctx.value)
                else:
                    push(len(ctx.data))
            elif op == CALLDATALOAD:
                offset = pop()
                chunk = ctx.data[offset:offset + 32] if offset < len(ctx.data) else b""
                push(int.from_bytes(chunk.ljust(32, b"\x00"), "big"))
            elif op == MLOAD:
                offset = pop()
                expand(offset, 32)
                push(int.from_bytes(memory[offset:offset + 32], "big"))
            elif op == MSTORE:
                offset = pop()
                value = pop()
                expand(offset, 32)
                memory[offset:offset + 32] = value.to_bytes(32, "big")
            elif op == SLOAD:
                push(ctx.host.get_storage(ctx.recipient, pop()))
            elif op == SSTORE:
                slot = pop()
                value = pop()
                current = ctx.host.get_storage(ctx.recipient, slot)
                cost = G_SSTORE_SET if current == 0 and value != 0 else G_SSTORE_RESET
                if cost > gas:
                    raise _Halt(OUT_OF_GAS, "SSTORE")
                gas -= cost
                ctx.host.set_storage(ctx.recipient, slot, value)
            elif LOG0 <= op <= LOG4:
                offset = pop()
                size = pop()
                topics = tuple(pop().to_bytes(32, "big") for _ in range(op - LOG0))
                byte_cost = G_LOG_BYTE * size
                if byte_cost > gas:
                    raise _Halt(OUT_OF_GAS, "LOG data")
                gas -= byte_cost
                expand(offset, size)
                logs.append(Log(ctx.recipient, topics, bytes(memory[offset:offset + size])))
            elif op == RETURN or op == REVERT_OP:
                offset = pop()
                size = pop()
                expand(offset, size)
                data = bytes(memory[offset:offset + size]) if size else b""
                if op == RETURN:
                    return ExecutionOutcome(SUCCESS, gas_limit - gas, data, tuple(logs), tuple(stack))
                return ExecutionOutcome(REVERT, gas_limit - gas, data, (), tuple(stack))
            elif op == STOP:
                break
            pc += 1
    except _Halt as halt:
        return ExecutionOutcome(halt.status, gas_limit, b"", (), tuple(stack), halt.error)
    return ExecutionOutcome(SUCCESS, gas_limit - gas, b"", tuple(logs), tuple(stack))
