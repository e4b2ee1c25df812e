"""RAM programs run one instruction per capsule.

ISA (12 opcodes, registers r0..r7, 64-bit wrapping arithmetic)::

    LOADI rd imm       rd = imm
    LOAD  rd ra        rd = mem[ra]
    STORE ra rs        mem[ra] = rs
    MOV   rd rs        rd = rs
    ADD   rd ra rb     rd = ra + rb
    SUB   rd ra rb     rd = ra - rb
    MUL   rd ra rb     rd = ra * rb
    AND   rd ra rb     rd = ra & rb
    LT    rd ra rb     rd = 1 if ra < rb else 0
    JZ    rs target    jump if rs == 0
    JMP   target
    HALT

Text format: one instruction per line, ``#`` starts a comment, ``name:``
defines a label; jump targets are labels or instruction indices.

On the machine every register and memory word sits in its own block. The
register file (pc plus r0..r7) is kept twice; each capsule reads one copy
and writes the other, then installs the closure for the opposite side.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..capsules import HEADER, capsule
from ..memory import WORD_MASK, MachineConfig
from .common import SimResult, TransferTracker, new_machine, program, register_program

OPCODES = ("LOADI", "LOAD", "STORE", "MOV", "ADD", "SUB", "MUL", "AND", "LT", "JZ", "JMP", "HALT")
N_REGS = 8
ARITY = {"LOADI": "ri", "LOAD": "rr", "STORE": "rr", "MOV": "rr", "ADD": "rrr", "SUB": "rrr",
         "MUL": "rrr", "AND": "rrr", "LT": "rrr", "JZ": "rt", "JMP": "t", "HALT": ""}
DEFAULT_MAX_STEPS = 1_000_000


class RamError(ValueError):
    pass


@dataclass(frozen=True)
class Instr:
    op: str
    a: int = 0
    b: int = 0
    c: int = 0

    def __str__(self):
        n = len(ARITY[self.op])
        return " ".join([self.op, *map(str, (self.a, self.b, self.c)[:n])])


@dataclass(frozen=True)
class RamProgram:
    code: tuple
    name: str = "ram"

    @property
    def ident(self) -> str:
        return "ram:" + ";".join(map(str, self.code))

    def __len__(self):
        return len(self.code)


def _reg(tok: str, line: int) -> int:
    if not (tok[:1] in "rR" and tok[1:].isdigit() and int(tok[1:]) < N_REGS):
        raise RamError(f"line {line}: bad register {tok!r}")
    return int(tok[1:])


def parse_ram(text: str, name: str = "ram") -> RamProgram:
    lines = []
    labels = {}
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        while s and ":" in s.split()[0]:
            lab, s = s.split(":", 1)
            labels[lab.strip()] = len(lines)
            s = s.strip()
        if s:
            lines.append((no, s.split()))
    code = []
    for no, toks in lines:
        op = toks[0].upper()
        if op not in ARITY:
            raise RamError(f"line {no}: unknown opcode {toks[0]!r}")
        kinds = ARITY[op]
        if len(toks) - 1 != len(kinds):
            raise RamError(f"line {no}: {op} takes {len(kinds)} operands")
        args = []
        for k, tok in zip(kinds, toks[1:]):
            if k == "r":
                args.append(_reg(tok, no))
            elif k == "i":
                args.append(int(tok, 0) & WORD_MASK)
            elif tok in labels:
                args.append(labels[tok])
            elif tok.isdigit():
                args.append(int(tok))
            else:
                raise RamError(f"line {no}: unknown label {tok!r}")
        code.append(Instr(op, *args))
    for ins in code:
        if ins.op in ("JZ", "JMP"):
            t = ins.b if ins.op == "JZ" else ins.a
            if not 0 <= t < len(code):
                raise RamError(f"jump target {t} outside the program")
    return RamProgram(tuple(code), name)


def _alu(op, x, y):
    if op == "ADD":
        return (x + y) & WORD_MASK
    if op == "SUB":
        return (x - y) & WORD_MASK
    if op == "MUL":
        return (x * y) & WORD_MASK
    if op == "AND":
        return x & y
    return int(x < y)  # LT


def run_native_ram(prog: RamProgram, memory, max_steps: int = DEFAULT_MAX_STEPS):
    """Plain interpreter: returns (memory, registers, instructions executed)."""
    mem = list(memory)
    r = [0] * N_REGS
    pc = steps = 0
    while True:
        if steps >= max_steps:
            raise RamError(f"no HALT within {max_steps} steps")
        if not 0 <= pc < len(prog.code):
            raise RamError(f"pc {pc} outside the program")
        ins = prog.code[pc]
        steps += 1
        pc += 1
        op = ins.op
        if op == "HALT":
            return mem, r, steps
        if op == "LOADI":
            r[ins.a] = ins.b
        elif op == "LOAD":
            if not 0 <= r[ins.b] < len(mem):
                raise RamError(f"load from {r[ins.b]} outside memory")
            r[ins.a] = mem[r[ins.b]]
        elif op == "STORE":
            if not 0 <= r[ins.a] < len(mem):
                raise RamError(f"store to {r[ins.a]} outside memory")
            mem[r[ins.a]] = r[ins.b]
        elif op == "MOV":
            r[ins.a] = r[ins.b]
        elif op == "JZ":
            if r[ins.a] == 0:
                pc = ins.b
        elif op == "JMP":
            pc = ins.a
        else:
            r[ins.a] = _alu(op, r[ins.b], r[ins.c])


@capsule("ram.step")
def ram_step(ctx):
    """Execute one instruction: registers from side ``side``, results to the other side."""
    pid, side, regs0, regs1, mem, n, halt = ctx.args
    prog = program(pid)
    B = ctx.B
    src, dst = (regs0, regs1) if side == 0 else (regs1, regs0)
    vals = []
    for j in range(N_REGS + 1):
        vals.append((yield ctx.read(src + j * B)))
    pc, r = vals[0], vals[1:]
    if not 0 <= pc < len(prog.code):
        raise RamError(f"pc {pc} outside the program")
    ins = prog.code[pc]
    op = ins.op
    pc += 1
    if op == "LOADI":
        r[ins.a] = ins.b
    elif op == "LOAD":
        if not 0 <= r[ins.b] < n:
            raise RamError(f"load from {r[ins.b]} outside memory")
        r[ins.a] = yield ctx.read(mem + r[ins.b] * B)
    elif op == "STORE":
        if not 0 <= r[ins.a] < n:
            raise RamError(f"store to {r[ins.a]} outside memory")
        yield ctx.write(mem + r[ins.a] * B, r[ins.b])
    elif op == "MOV":
        r[ins.a] = r[ins.b]
    elif op == "JZ":
        if r[ins.a] == 0:
            pc = ins.b
    elif op == "JMP":
        pc = ins.a
    elif op != "HALT":
        r[ins.a] = _alu(op, r[ins.b], r[ins.c])
    if op == "HALT":
        pc = vals[0]
    for j, v in enumerate([pc, *r]):
        yield ctx.write(dst + j * B, v)
    yield ctx.install(halt if op == "HALT" else ctx.cont)


def simulate_ram(prog: RamProgram, memory, faults=None, B: int = 1, seed: int = 0,
                 log: bool = False, strategy=None,
                 max_steps: int = DEFAULT_MAX_STEPS) -> SimResult:
    pid = register_program(prog)
    n = max(len(memory), 1)
    regs = N_REGS + 1
    args = 7
    hdr = -(-(HEADER + args) // B) * B
    need = B * (2 * regs + n + 4) + 3 * hdr
    Mp = -(-(need + 8 * B) // B) * B
    m = new_machine(MachineConfig(P=1, M=max(B, 4 * regs), Mp=Mp, B=B, S=2), faults, seed, log,
                    strategy)
    m.step_budget = max_steps * 200
    r0 = m.setup_alloc(regs * B)
    r1 = m.setup_alloc(regs * B)
    mem = m.setup_alloc(n * B)
    for a, v in enumerate(memory):
        m.poke(mem + a * B, [v])
    halt = m.setup_closure("sim.halt")
    c0 = m.setup_alloc(hdr)
    c1 = m.setup_alloc(hdr)
    key = m.registry.key("ram.step")
    m.poke(c0, [key, c1, args, pid, 0, r0, r1, mem, n, halt])
    m.poke(c1, [key, c0, args, pid, 1, r0, r1, mem, n, halt])
    tracker = TransferTracker(m)
    m.boot(0, c0)
    res = m.run()
    steps = sum(1 for k, _ in tracker.per_capsule if k == key)
    final = r1 if steps % 2 else r0
    words = res.memory
    state = [words[final + j * B] for j in range(regs)]
    return SimResult([words[mem + a * B] for a in range(len(memory))], res.report, m,
                     capsules=steps, state=state)


def registers(result: SimResult) -> list[int]:
    """r0..r7 after HALT."""
    return result.state[1:]
