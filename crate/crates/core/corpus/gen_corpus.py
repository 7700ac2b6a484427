#!/usr/bin/env python3
"""Writes the generated corpus programs and prints each benchmark's expected
exit code and output, computed directly in Python as an oracle."""

import random
from pathlib import Path

HERE = Path(__file__).parent
M32 = 0xFFFFFFFF


def bubble():
    rng = random.Random(7)
    data = [rng.randrange(0, 1 << 31) for _ in range(48)]
    words = "\n".join(
        "        .word " + ", ".join(f"0x{w:08x}" for w in data[i:i + 6]) for i in range(0, len(data), 6)
    )
    src = f"""# Bubble sort of 48 words, then a rotate-xor checksum of the result.
        la   s0, array
        li   s1, {len(data) - 1}             # passes left
pass:
        mv   t2, s0
        mv   t6, s1
        li   s3, 0              # swaps this pass
inner:
        lw   t3, 0(t2)
        lw   t4, 4(t2)
        addi t5, t5, 1          # comparisons
        addi t2, t2, 4
        bleu t3, t4, noswap
        sw   t4, -4(t2)
        sw   t3, 0(t2)
        addi s3, s3, 1
noswap:
        addi t6, t6, -1
        bnez t6, inner
        addi s1, s1, -1
        bnez s1, pass
        mv   t2, s0
        li   t6, {len(data)}
        li   s0, 0
check:
        lw   t3, 0(t2)
        slli t0, s0, 5
        srli t1, s0, 27
        or   s0, t0, t1
        xor  s0, s0, t3
        addi t2, t2, 4
        addi t6, t6, -1
        bnez t6, check
        andi a0, s0, 255
        li   a7, 64
        ecall
        li   a7, 93
        ecall

        .data
array:
{words}
"""
    s = 0
    for w in sorted(data):
        s = ((s << 5) | (s >> 27)) & M32
        s ^= w
    return src, s & 255, bytes([s & 255])


def matmul():
    rng = random.Random(11)
    n = 4
    a = [[rng.randrange(0, 256) for _ in range(n)] for _ in range(n)]
    b = [[rng.randrange(0, 16) for _ in range(n)] for _ in range(n)]
    lines = [
        "# 4x4 integer matrix multiply, fully unrolled. Products use a",
        "# branchless shift-and-mask multiply, so the program has no branches.",
        "        la   s0, mat_a",
        "        la   s1, mat_b",
        "        la   s2, mat_c",
    ]
    for i in range(n):
        for j in range(n):
            lines.append(f"        li   s3, 0              # c[{i}][{j}]")
            for k in range(n):
                lines.append(f"        lw   t0, {4 * (i * n + k)}(s0)")
                lines.append(f"        lw   t1, {4 * (k * n + j)}(s1)")
                for bit in range(4):
                    lines.append(f"        srli t2, t1, {bit}")
                    lines.append("        andi t2, t2, 1")
                    lines.append("        sub  t2, zero, t2")
                    lines.append(f"        slli t3, t0, {bit}")
                    lines.append("        and  t2, t2, t3")
                    lines.append("        add  s3, s3, t2")
            lines.append(f"        sw   s3, {4 * (i * n + j)}(s2)")
    lines.append("        li   a0, 0")
    for idx in range(n * n):
        lines.append(f"        lw   t0, {4 * idx}(s2)")
        lines.append("        slli t1, a0, 3")
        lines.append("        add  a0, a0, t1")
        lines.append("        xor  a0, a0, t0")
    lines += ["        andi a0, a0, 255", "        li   a7, 93", "        ecall", "", "        .data"]
    for name, m in (("mat_a", a), ("mat_b", b)):
        lines.append(f"{name}:")
        for row in m:
            lines.append("        .word " + ", ".join(str(v) for v in row))
    lines.append("mat_c:  .space 64")
    c = [[sum(a[i][k] * b[k][j] for k in range(n)) & M32 for j in range(n)] for i in range(n)]
    acc = 0
    for i in range(n):
        for j in range(n):
            acc = (acc + (acc << 3)) & M32
            acc ^= c[i][j]
    return "\n".join(lines) + "\n", acc & 255, b""


def dfa():
    rng = random.Random(23)
    states = 96
    span = 40
    trans = []
    for s in range(states):
        lo, hi = max(0, s - span), min(states - 1, s + span)
        trans.append([rng.randint(lo, hi) for _ in range(4)])
    weight = [rng.randrange(1, 200) for _ in range(states)]
    symbols = [rng.randrange(0, 4) for _ in range(900)]
    lines = [
        "# Table-free state machine: each of the 96 states is a block of code",
        "# that consumes one input symbol and branches to its successor.",
        "        la   s0, input",
        f"        li   s1, {len(symbols)}            # symbols left",
        "        li   s2, 0              # checksum",
        "        j    st_0",
    ]
    for s in range(states):
        t = trans[s]
        lines += [
            f"st_{s}:",
            "        addi s1, s1, -1",
            f"        bltz s1, done_{s}",
            "        lbu  t0, 0(s0)",
            "        addi s0, s0, 1",
            f"        addi s2, s2, {weight[s]}",
            f"        beqz t0, st_{t[0]}",
            "        addi t1, t0, -1",
            f"        beqz t1, st_{t[1]}",
            "        addi t1, t0, -2",
            f"        beqz t1, st_{t[2]}",
            f"        j    st_{t[3]}",
            f"done_{s}:",
            f"        li   a0, {s}",
            "        j    finish",
        ]
    lines += [
        "finish:",
        "        add  a0, a0, s2",
        "        andi a0, a0, 255",
        "        li   a7, 93",
        "        ecall",
        "",
        "        .data",
        "input:",
    ]
    for i in range(0, len(symbols), 30):
        lines.append("        .byte " + ", ".join(str(v) for v in symbols[i:i + 30]))
    state, acc = 0, 0
    for sym in symbols:
        acc += weight[state]
        state = trans[state][sym]
    # the state reached after the last symbol finds none left and stops
    return "\n".join(lines) + "\n", (state + acc) & 255, b""


def fib_oracle():
    s = 0
    for n in range(60):
        a, b = 0, 1
        for _ in range(n):
            a, b = b, (a + b) & M32
        s = (s + a) & M32
    return s & 255


def sieve_oracle():
    return sum(1 for p in range(2, 1000) if all(p % d for d in range(2, int(p ** 0.5) + 1)))


def branchy_oracle():
    s0, st = 0, 0x2545F491
    for _ in range(400):
        st ^= (st << 13) & M32
        st ^= st >> 17
        st ^= (st << 5) & M32
        if st & 1:
            s0 = (s0 + 3) & M32
        if st & 2:
            s0 ^= 0x55
        if not st & 4:
            s0 = (s0 + 7) & M32
        if not st >> 31:
            s0 = (s0 * 3) & M32
    return s0 & 255


def main():
    for name, gen in (("bubble_sort", bubble), ("matmul", matmul), ("dfa", dfa)):
        src, code, out = gen()
        (HERE / f"{name}.s").write_text(src)
        print(f"{name}: exit={code} output={out!r}")
    print(f"fib: exit={fib_oracle()}")
    print(f"sieve: exit={sieve_oracle()}")
    print(f"branchy: exit={branchy_oracle()}")


if __name__ == "__main__":
    main()
