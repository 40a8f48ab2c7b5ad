"""Random straight-line programs over the supported opcode subset.

The generator tracks the stack depth so most programs run to completion;
a small fraction deliberately breaks the rules (underflow, bad jumps,
unknown bytes) to exercise the failure paths.
"""
import random

# opcode -> (pops, pushes)
SIMPLE = {
    0x01: (2, 1), 0x02: (2, 1), 0x03: (2, 1), 0x04: (2, 1), 0x10: (2, 1), 0x11: (2, 1), 0x14: (2, 1),
    0x15: (1, 1), 0x16: (2, 1), 0x17: (2, 1), 0x18: (2, 1), 0x19: (1, 1), 0x33: (0, 1), 0x34: (0, 1),
    0x35: (1, 1), 0x36: (0, 1), 0x50: (1, 0), 0x51: (1, 1), 0x52: (2, 0), 0x54: (1, 1), 0x55: (2, 0),
    0x58: (0, 1), 0x5B: (0, 0),
}
MEMORY_OPS = {0x51, 0x52}
SMALL = [0, 1, 2, 3, 31, 32, 33, 64, 100, 255]


def _push(out: bytearray, rng: random.Random, small: bool) -> None:
    if small:
        value = rng.choice(SMALL + [rng.randint(0, 1024)])
        size = max(1, (value.bit_length() + 7) // 8)
    else:
        size = rng.choice([1, 2, 4, 8, 20, 32, rng.randint(1, 32)])
        value = rng.getrandbits(8 * size)
    out.append(0x5F + size)
    out += value.to_bytes(size, "big")


def random_program(rng: random.Random, max_ops: int = 64) -> bytes:
    out = bytearray()
    depth = 0
    chaos = rng.random() < 0.15
    budget = rng.randint(1, max_ops - 5)
    while count_ops(out) < budget:
        roll = rng.random()
        if chaos and roll < 0.03:
            out.append(rng.choice([0x56, 0x57, 0xFE, 0x0C, 0x50]))
            continue
        if depth < 2 or roll < 0.3:
            _push(out, rng, small=rng.random() < 0.7)
            depth += 1
        elif roll < 0.4:
            n = rng.randint(1, min(depth, 16))
            out.append(0x80 + n - 1)
            depth += 1
        elif roll < 0.5 and depth >= 2:
            n = rng.randint(1, min(depth - 1, 16))
            out.append(0x90 + n - 1)
        elif roll < 0.55 and depth >= 2:
            topics = rng.randint(0, min(depth - 2, 4))
            # keep offset and size small: PUSH size, PUSH offset, LOGn
            for _ in range(topics):
                _push(out, rng, small=False)
            out += bytes([0x60, rng.randint(0, 64), 0x60, rng.randint(0, 64), 0xA0 + topics])
            depth += 0
        else:
            op = rng.choice(list(SIMPLE))
            pops, pushes = SIMPLE[op]
            if op in MEMORY_OPS:
                # address memory through a fresh small offset
                if op == 0x52:
                    out += bytes([0x60, rng.randint(0, 96), 0x52])
                    depth -= 1
                else:
                    out += bytes([0x60, rng.randint(0, 96), 0x51])
                    depth += 1
                continue
            if op == 0x35:
                out += bytes([0x60, rng.randint(0, 80), 0x35])
                depth += 1
                continue
            if pops > depth:
                continue
            out.append(op)
            depth += pushes - pops
    if rng.random() < 0.6:
        if rng.random() < 0.5:
            out.append(0x00)
        else:
            out += bytes([0x60, rng.randint(0, 64), 0x60, rng.randint(0, 64), rng.choice([0xF3, 0xFD])])
    return truncate(bytes(out), max_ops)


def truncate(code: bytes, max_ops: int) -> bytes:
    """Keep the last ``max_ops`` ops so the terminal instruction survives."""
    starts = []
    pc = 0
    while pc < len(code):
        starts.append(pc)
        op = code[pc]
        pc += 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
    if len(starts) <= max_ops:
        return code
    return code[starts[len(starts) - max_ops]:]


def count_ops(code: bytes) -> int:
    ops = pc = 0
    while pc < len(code):
        op = code[pc]
        pc += 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
        ops += 1
    return ops
