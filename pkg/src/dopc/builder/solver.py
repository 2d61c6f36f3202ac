"""Place one instance's data requirements into its buffer.

Each instance owns a buffer of ``slot_size + grow`` bytes at a known base
address. Anchor cells sit at fixed offsets; every ``deref`` step asks for a
pointer to a fresh region, and every ``ConstRef`` for a constant cell. The
solver searches positions for those regions first-fit with backtracking.
Regions may overlap wherever their bytes agree; symbolic bytes (values that
depend on a leak) only overlap an identical cell.
"""

import warnings
from dataclasses import dataclass, field

from ..errors import SolveError
from .terms import ConstRef, Val

SEARCH_LIMIT = 200_000
SLACK_WARN = 0.10


@dataclass
class Node:
    """A region reached through a pointer; offsets are relative to the pointer."""
    key: tuple
    cells: dict = field(default_factory=dict)     # offset -> (width, term)
    reserved: list = field(default_factory=list)  # (offset, length)
    children: dict = field(default_factory=dict)  # offset of pointer cell -> Node

    def span(self, aw):
        lo, hi = None, None
        for off, (w, _) in self.cells.items():
            lo = off if lo is None else min(lo, off)
            hi = off + w if hi is None else max(hi, off + w)
        for off, n in self.reserved:
            lo = off if lo is None else min(lo, off)
            hi = off + n if hi is None else max(hi, off + n)
        if lo is None:
            lo, hi = 0, 1
        return lo, hi


@dataclass
class SlotSolution:
    data: bytearray
    holes: list             # (offset, width, Val) placeholders inside the buffer
    used: int
    positions: dict = field(default_factory=dict)


class _PointerTo:
    __slots__ = ("node",)

    def __init__(self, node):
        self.node = node


class _Location:
    __slots__ = ("node", "offset")

    def __init__(self, node, offset):
        self.node = node
        self.offset = offset


def _put_cell(node, off, width, term):
    old = node.cells.get(off)
    if old is not None:
        if old[0] == width and _same(old[1], term):
            return
        raise SolveError(f"conflicting requirements for one cell: {_show(old[1])} vs {_show(term)}")
    for o, (w, t) in node.cells.items():
        if o < off + width and off < o + w and o != off:
            if not (isinstance(t, Val) and isinstance(term, Val) and t.concrete and term.concrete):
                raise SolveError("overlapping cells with incompatible values")
            a = t.const.to_bytes(w, "little", signed=False) if t.const >= 0 else None
            b = term.const.to_bytes(width, "little", signed=False) if term.const >= 0 else None
            lo, hi = max(o, off), min(o + w, off + width)
            if a is None or b is None or a[lo - o:hi - o] != b[lo - off:hi - off]:
                raise SolveError("overlapping cells with different bytes")
    node.cells[off] = (width, term)


def _same(a, b):
    if isinstance(a, _PointerTo) and isinstance(b, _PointerTo):
        return a.node is b.node
    if isinstance(a, _Location) and isinstance(b, _Location):
        return a.node is b.node and a.offset == b.offset
    return a == b


def _show(t):
    if isinstance(t, _PointerTo):
        return "pointer"
    if isinstance(t, _Location):
        return "location"
    return str(t)


class InstanceProblem:
    """Tree of regions and constant cells for one instance."""

    def __init__(self, inst, target):
        self.target = target
        self.aw = target.addr_width
        self.root = Node(("root",))
        self.consts = {}        # (value, width) -> Node
        self.size = target.slot_size + inst.grow
        for eq in inst.equations:
            node, off = self.locate(eq.path)
            _put_cell(node, off, eq.width, self.term(eq.value))
        for path, n in inst.reserved:
            node, off = self.locate(path)
            node.reserved.append((off, n))

    def locate(self, path):
        a = self.target.anchors.get(path.anchor)
        if a is None:
            raise SolveError(f"unknown anchor {path.anchor!r}")
        if not a.in_slot:
            raise SolveError(f"anchor {path.anchor!r} lies outside the instance buffer")
        node, off = self.root, a.slot_offset
        for s in path.steps:
            if s[0] == "off":
                off += s[1]
                continue
            child = node.children.get(off)
            if child is None:
                cur = node.cells.get(off)
                if cur is not None and not isinstance(cur[1], _PointerTo):
                    raise SolveError("a cell is required to be both a value and a pointer")
                child = Node(node.key + (off,))
                node.children[off] = child
                _put_cell(node, off, self.aw, _PointerTo(child))
            node, off = child, 0
        return node, off

    def term(self, v):
        if isinstance(v, ConstRef):
            inner = self.term(v.value)
            key = (v.value, v.width)
            node = self.consts.get(key)
            if node is None:
                node = Node(("const", len(self.consts)))
                node.cells[0] = (v.width, inner)
                self.consts[key] = node
            if v.addend:
                return _Location(node, v.addend)
            return _PointerTo(node)
        if isinstance(v, Val):
            return v
        # a Path on the right: the location it names
        node, off = self.locate(v)
        return _Location(node, off)

    def items(self):
        """Regions to place, dependencies first."""
        order, seen = [], set()

        def deps(node):
            out = []
            for _, (w, t) in sorted(node.cells.items()):
                if isinstance(t, (_PointerTo, _Location)) and t.node is not self.root:
                    out.append(t.node)
            return out

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for d in deps(node):
                visit(d)
            if node is not self.root:
                order.append(node)

        visit(self.root)
        for n in self.consts.values():
            visit(n)
        return order


def _cell_bytes(width, term, base, pos_of, aw):
    """Bytes for one cell, or ('sym', Val) when it depends on a leak."""
    if isinstance(term, _PointerTo):
        lo = pos_of[id(term.node)][1]
        v = base + (pos_of[id(term.node)][0] - lo)
    elif isinstance(term, _Location):
        start, lo = pos_of[id(term.node)]
        v = base + (start - lo + term.offset)
    else:
        v = term
    if not v.concrete:
        return ("sym", v)
    return (v.const & ((1 << (8 * width)) - 1)).to_bytes(width, "little")


class _Buffer:
    def __init__(self, n, forbidden):
        self.b = [None] * n
        self.forbidden = forbidden
        self.log = []

    def fits(self, start, cells):
        n = len(self.b)
        for off, (kind, payload, width) in cells:
            a = start + off
            if a < 0 or a + width > n:
                return False
            if kind == "bytes":
                for i, x in enumerate(payload):
                    cur = self.b[a + i]
                    if cur is None:
                        if x in self.forbidden:
                            return False
                        continue
                    if cur != x:
                        return False
            elif kind == "sym":
                for i in range(width):
                    cur = self.b[a + i]
                    if cur is not None and cur != ("sym", payload, i, a):
                        return False
            else:  # reserved
                for i in range(width):
                    if self.b[a + i] is not None:
                        return False
        return True

    def write(self, start, cells):
        mark = len(self.log)
        for off, (kind, payload, width) in cells:
            a = start + off
            for i in range(width):
                if self.b[a + i] is None:
                    if kind == "bytes":
                        self.b[a + i] = payload[i]
                    elif kind == "sym":
                        self.b[a + i] = ("sym", payload, i, a)
                    else:
                        self.b[a + i] = "R"
                    self.log.append(a + i)
        return mark

    def undo(self, mark):
        while len(self.log) > mark:
            self.b[self.log.pop()] = None


def _encode(node, base, pos_of, aw):
    out = []
    for off, (w, t) in sorted(node.cells.items()):
        cb = _cell_bytes(w, t, base, pos_of, aw)
        if isinstance(cb, tuple):
            out.append((off, ("sym", cb[1], w)))
        else:
            out.append((off, ("bytes", cb, w)))
    for off, n in node.reserved:
        out.append((off, ("res", None, n)))
    return out


def solve_instance(inst, target, base, limit=SEARCH_LIMIT):
    prob = InstanceProblem(inst, target)
    aw = target.addr_width
    items = prob.items()
    n = prob.size
    buf = _Buffer(n, target.forbidden_bytes)
    pos_of = {id(prob.root): (0, 0)}
    budget = [limit]
    spans = [it.span(aw) for it in items]

    root_pending = sorted(prob.root.cells.items())

    def place_root_ready():
        """Write root cells whose values are now computable."""
        marks = []
        for off, (w, t) in root_pending:
            if (off, w) in placed_root:
                continue
            if isinstance(t, (_PointerTo, _Location)) and id(t.node) not in pos_of:
                continue
            cb = _cell_bytes(w, t, base, pos_of, aw)
            cell = [(off, ("sym", cb[1], w) if isinstance(cb, tuple) else ("bytes", cb, w))]
            if not buf.fits(0, cell):
                for m, key in reversed(marks):
                    buf.undo(m)
                    placed_root.discard(key)
                return None
            marks.append((buf.write(0, cell), (off, w)))
            placed_root.add((off, w))
        return marks

    placed_root = set()
    base_marks = place_root_ready()
    if base_marks is None:
        raise SolveError("anchor cells conflict")
    for off, ln in prob.root.reserved:
        if not buf.fits(0, [(off, ("res", None, ln))]):
            raise SolveError("reserved bytes overlap required cells")
        buf.write(0, [(off, ("res", None, ln))])

    def search(i):
        if i == len(items):
            return len(placed_root) == len(root_pending)
        node = items[i]
        lo, hi = spans[i]
        for start in range(0, n - (hi - lo) + 1):
            budget[0] -= 1
            if budget[0] < 0:
                raise SolveError(f"placement search exceeded {limit} steps")
            pos_of[id(node)] = (start, lo)
            cells = _encode(node, base, pos_of, aw)
            if not buf.fits(start - lo, cells):
                continue
            mark = buf.write(start - lo, cells)
            marks = place_root_ready()
            if marks is not None:
                if search(i + 1):
                    return True
                for m, key in reversed(marks):
                    buf.undo(m)
                    placed_root.discard(key)
            buf.undo(mark)
        pos_of.pop(id(node), None)
        return False

    if not search(0):
        raise SolveError(f"no placement fits {n} bytes for {inst.text or inst.gadget}")

    data = bytearray(n)
    holes, used, seen_sym = [], 0, set()
    filler = next(b for b in range(256) if b not in target.forbidden_bytes)
    for i, x in enumerate(buf.b):
        if x is None or x == "R":
            data[i] = filler if x is None else 0
            if x == "R":
                used += 1
            continue
        used += 1
        if isinstance(x, tuple):
            _, v, k, a = x
            if (a, v) not in seen_sym:
                seen_sym.add((a, v))
                holes.append((a, _sym_width(buf.b, a, v), v))
            data[i] = 0
        else:
            data[i] = x
    if n and (n - used) / n < SLACK_WARN:
        warnings.warn(f"instance {inst.index} ({inst.gadget}) leaves under 10% of its buffer free",
                      stacklevel=2)
    return SlotSolution(data, holes, used, {k: v for k, v in pos_of.items()})


def _sym_width(b, a, v):
    w = 0
    while a + w < len(b) and b[a + w] == ("sym", v, w, a):
        w += 1
    return w


def solve_all(req, cache=True):
    """Solve every instance; identical requirement sets are solved once."""
    t = req.target
    memo = {}
    out = []
    for inst in req.instances:
        base = t.slot_addr(inst.index)
        key = (tuple(inst.equations), tuple(inst.reserved), inst.grow, base)
        sol = memo.get(key) if cache else None
        if sol is None:
            sol = solve_instance(inst, t, base)
            if cache:
                memo[key] = sol
        out.append(sol)
    return out, len(memo)
