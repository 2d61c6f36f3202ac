"""Tree-walking evaluator for payload scripts.

It shares no code with the compiler and serves as the semantic oracle for
compiled programs. Variables live in a flat little-endian memory, so
pointer arithmetic and typed memory access behave as on a target.
"""

from dataclasses import dataclass, field

from ..errors import FuelExhausted, SlangError
from ..types import KIND_WIDTHS
from . import ast as A
from .parser import parse_payload

_BIN = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "&": lambda a, b: a & b,
    "|": lambda a, b: a | b,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    ">=": lambda a, b: int(a >= b),
    "<": lambda a, b: int(a < b),
    ">": lambda a, b: int(a > b),
    "<=": lambda a, b: int(a <= b),
}


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


@dataclass
class EvalResult:
    mem: bytearray
    addr: dict                  # mangled name -> address
    widths: dict                # mangled name -> element width
    counts: dict = field(default_factory=dict)
    steps: int = 0

    def read(self, a, w):
        return int.from_bytes(self.mem[a:a + w], "little")

    def value(self, name, index=0):
        w = self.widths[name]
        return self.read(self.addr[name] + index * w, w)

    def array(self, name):
        return [self.value(name, i) for i in range(self.counts.get(name) or 1)]


class Evaluator:
    def __init__(self, ast, addr_width=4, addresses=None, leaks=None, memory=None,
                 mem_size=1 << 20, base=0x1000, fuel=10**7):
        self.ast = ast
        self.aw = addr_width
        self.mem = bytearray(mem_size) if memory is None else bytearray(memory)
        self.leaks = dict(leaks or {})
        self.fuel = fuel
        self.steps = 0
        self.addr = {}
        self.widths = {}
        self.counts = {}
        syms = list(ast.globals) + [s for p in ast.procs.values() for s in p.symbols.values()]
        cur = base
        for s in syms:
            w = self.kw(s.kind)
            self.widths[s.mangled] = w
            self.counts[s.mangled] = s.count
            if addresses and s.mangled in addresses:
                self.addr[s.mangled] = addresses[s.mangled]
            elif s.address is not None:
                self.addr[s.mangled] = s.address
            else:
                cur = -(-cur // w) * w
                self.addr[s.mangled] = cur
                cur += w * (s.count or 1)
        for s in syms:
            if s.init is None:
                continue
            w = self.widths[s.mangled]
            for i, v in enumerate(s.init):
                self.write(self.addr[s.mangled] + i * w, w, self.static(v))

    def kw(self, kind):
        return self.aw if kind == "addr" else KIND_WIDTHS[kind]

    def static(self, v):
        if isinstance(v, int):
            return v
        if isinstance(v, A.Leak):
            return self.leak(v)
        k = 0 if v.index is None else self.expr(v.index)[0]
        return self.addr[v.sym.mangled] + k * self.widths[v.sym.mangled]

    def leak(self, e):
        if e.name not in self.leaks:
            raise SlangError(f"unbound leak {e.name}", e.line, e.col)
        return self.leaks[e.name] + e.offset

    def read(self, a, w):
        if a < 0 or a + w > len(self.mem):
            raise SlangError(f"read outside memory at {a:#x}")
        return int.from_bytes(self.mem[a:a + w], "little")

    def write(self, a, w, v):
        if a < 0 or a + w > len(self.mem):
            raise SlangError(f"write outside memory at {a:#x}")
        self.mem[a:a + w] = (v % (1 << (8 * w))).to_bytes(w, "little")

    def tick(self):
        self.steps += 1
        if self.steps > self.fuel:
            raise FuelExhausted(f"evaluation exceeded {self.fuel} steps")

    # -- expressions: (value, width or None) -------------------------------

    def place(self, e):
        """(address, width) of an assignable expression."""
        if isinstance(e, A.Name):
            return self.addr[e.sym.mangled], self.widths[e.sym.mangled]
        if isinstance(e, A.Index):
            w = self.widths[e.sym.mangled]
            i = self.expr(e.index)[0]
            return (self.addr[e.sym.mangled] + i * w) % (1 << (8 * self.aw)), w
        if isinstance(e, A.Mem):
            return self.expr(e.addr)[0] % (1 << (8 * self.aw)), self.kw(e.kind)
        raise SlangError("not assignable", e.line, e.col)

    def expr(self, e):
        if isinstance(e, A.Num):
            return e.value, None
        if isinstance(e, (A.Name, A.Index, A.Mem)):
            a, w = self.place(e)
            return self.read(a, w), w
        if isinstance(e, A.AddrOf):
            if e.index is None:
                return self.addr[e.sym.mangled], self.aw
            return self.place(A.Index(e.name, e.index, e.sym))[0], self.aw
        if isinstance(e, A.Leak):
            return self.leak(e), self.aw
        if isinstance(e, A.Unary):
            if e.op == "signed":
                return self.expr(e.operand)
            v, w = self.expr(e.operand)
            if w is None:
                return (-v if e.op == "-" else int(v == 0)), None
            w = max(4, w)
            m = (1 << (8 * w)) - 1
            return ((-v) & m if e.op == "-" else int(v & m == 0)), w
        if isinstance(e, A.Binary):
            lv, lw = self.expr(e.left)
            rv, rw = self.expr(e.right)
            if lw is None and rw is None:
                if e.op in A.ARITH:
                    return _BIN[e.op](lv, rv), None
            w = max(4, lw or 0, rw or 0)
            m = (1 << (8 * w)) - 1
            lv, rv = lv & m, rv & m
            if e.op in A.COMPARE and (_signed(e.left) or _signed(e.right)):
                bias = 1 << (8 * w - 1)
                lv, rv = (lv + bias) & m, (rv + bias) & m
            return _BIN[e.op](lv, rv) & m, w
        raise SlangError(f"cannot evaluate {type(e).__name__}", e.line, e.col)

    def truth(self, e):
        v, w = self.expr(e)
        if w is not None:
            v &= (1 << (8 * w)) - 1
        return v != 0

    # -- statements --------------------------------------------------------

    def block(self, body):
        for s in body:
            self.stmt(s)

    def stmt(self, s):
        self.tick()
        if isinstance(s, A.Assign):
            v, _ = self.expr(s.value)
            a, w = self.place(s.target)
            self.write(a, w, v)
        elif isinstance(s, A.Local):
            if s.value is not None:
                self.stmt(A.Assign(A.Name(s.sym.name, s.sym), s.value))
        elif isinstance(s, A.If):
            if self.truth(s.cond):
                self.block(s.then)
            elif s.orelse:
                self.block(s.orelse)
        elif isinstance(s, (A.While, A.For, A.Repeat, A.Loop)):
            self.loop(s)
        elif isinstance(s, A.Break):
            raise _Break()
        elif isinstance(s, A.Continue):
            raise _Continue()
        elif isinstance(s, A.Call):
            proc = self.ast.procs[s.name]
            for p, arg in zip(proc.params, s.args):
                v, _ = self.expr(arg)
                self.write(self.addr[p.mangled], self.widths[p.mangled], v)
            self.block(proc.body)
        elif isinstance(s, A.Asm):
            raise SlangError("the evaluator cannot run asm blocks", s.line, s.col)
        else:
            raise SlangError(f"cannot evaluate {type(s).__name__}", s.line, s.col)

    def loop(self, s):
        if isinstance(s, A.For) and s.init is not None:
            self.stmt(s.init)
        guarded = isinstance(s, (A.While, A.For))
        while True:
            self.tick()
            if guarded and not self.truth(s.cond):
                return
            try:
                self.block(s.body)
            except _Break:
                return
            except _Continue:
                pass
            if isinstance(s, A.For) and s.step is not None:
                self.stmt(s.step)
            if isinstance(s, A.Repeat) and self.truth(s.cond):
                return

    def run(self):
        self.block(self.ast.procs[self.ast.entry].body)
        return EvalResult(self.mem, self.addr, self.widths, self.counts, self.steps)


def _signed(e):
    return isinstance(e, A.Unary) and e.op == "signed"


def evaluate(source, addr_width=4, addresses=None, leaks=None, memory=None, fuel=10**7, **kw):
    """Run a script directly; returns an EvalResult with the final memory."""
    ast = parse_payload(source) if isinstance(source, str) else source
    return Evaluator(ast, addr_width, addresses, leaks, memory, fuel=fuel, **kw).run()
