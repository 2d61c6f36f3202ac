"""Where program variables and pooled constants live."""

from ..asm.ir import ADDR, CREF, IMM, LABEL, LEAK
from ..errors import SolveError
from .terms import ConstRef, Val


class Layout:
    """Addresses of variables plus the preloaded data segment.

    ``data_items`` holds ``(offset, width, Val)`` triples relative to the
    data segment start; they become bytes (or placeholders) in the image.
    """

    def __init__(self, target):
        self.target = target
        self.addrs = {}
        self.decls = {}
        self.data_items = []
        self.data_used = 0
        self.pool = {}
        self.finished = False

    def address(self, name):
        if name not in self.addrs:
            raise SolveError(f"variable {name!r} has no address")
        return self.addrs[name]

    def _alloc(self, size, align):
        t = self.target
        cur = (self.data_used + align - 1) // align * align
        if cur + size > t.data_size:
            raise SolveError(f"data segment of {t.name} overflows ({cur + size} > {t.data_size} bytes)")
        self.data_used = cur + size
        return cur

    def const(self, value, width):
        """Address term of a cell holding ``value`` (a Val or ConstRef)."""
        if not self.target.const_pool:
            return ConstRef(value, width)
        key = (value, width)
        if key not in self.pool:
            off = self._alloc(width, min(width, self.target.addr_width))
            self.data_items.append((off, width, value))
            self.pool[key] = self.target.addr(self.target.data_base + off)
        return self.pool[key]

    def in_data(self, addr):
        t = self.target
        return (addr.leak == t.relative and t.data_size
                and t.data_base <= addr.const < t.data_base + t.data_size)

    def finish(self, labels):
        """Emit initial values once label indices are known."""
        if self.finished:
            return
        self.finished = True
        aw = self.target.addr_width
        for name, d in self.decls.items():
            if d.init is None:
                continue
            a = self.addrs[name]
            if not self.in_data(a):
                raise SolveError(
                    f"initial value of {name!r} needs memory preparation on {self.target.name}")
            w = d.elem_width(aw)
            if len(d.init) > (d.count or 1):
                raise SolveError(f"too many initializers for {name!r}")
            base = a.const - self.target.data_base
            for i, o in enumerate(d.init):
                v = self._init_value(o, labels, w)
                if v.concrete and v.const == 0:
                    continue
                self.data_items.append((base + i * w, w, v))

    def _init_value(self, o, labels, w):
        if o.kind == IMM:
            return Val(o.value & ((1 << (8 * w)) - 1))
        if o.kind == LABEL:
            return Val(labels[o.name])
        if o.kind == ADDR:
            return self.address(o.name) + o.value
        if o.kind == LEAK:
            return Val(o.value, o.name)
        if o.kind == CREF:
            raise SolveError("constant-cell initializers are not supported")
        raise SolveError(f"bad initializer {o}")

    def data_bytes(self):
        """Concrete data segment bytes and placeholder list (offset, width, Val)."""
        buf = bytearray(self.data_used)
        holes = []
        for off, w, v in self.data_items:
            if isinstance(v, ConstRef):
                raise SolveError("unresolved constant reference in data segment")
            if v.concrete:
                buf[off:off + w] = (v.const & ((1 << (8 * w)) - 1)).to_bytes(w, "little")
            else:
                holes.append((off, w, v))
        return buf, holes


def plan_layout(prog, target):
    lay = Layout(target)
    aw = target.addr_width
    for d in prog.decls:
        if d.name in lay.addrs:
            raise SolveError(f"duplicate declaration {d.name}")
        lay.decls[d.name] = d
        if d.address is not None:
            if not 0 <= d.address < target.memory_size:
                raise SolveError(f"{d.name} at {d.address:#x} lies outside target memory")
            lay.addrs[d.name] = target.addr(d.address)
            continue
        if not target.data_size:
            raise SolveError(
                f"variable {d.name!r} has no address on {target.name}; run memory preparation")
        w = d.elem_width(aw)
        align = d.align or min(w, aw)
        off = lay._alloc(d.size(aw), align)
        lay.addrs[d.name] = target.addr(target.data_base + off)
    return lay
