"""Check a solved structure by chasing every required path through the bytes.

Shares nothing with the solver beyond the requirement objects: it loads the
concretized image into a sparse address map and reads memory literally.
"""

from dataclasses import dataclass, field

from .image import concretize
from .terms import ConstRef, Val


class _Mem:
    def __init__(self):
        self.segs = []

    def map(self, base, data):
        self.segs.append((base, bytes(data)))

    def read(self, addr, n):
        for base, data in self.segs:
            if base <= addr and addr + n <= base + len(data):
                return int.from_bytes(data[addr - base:addr - base + n], "little")
        raise LookupError(f"unmapped read of {n} bytes at {addr:#x}")


@dataclass
class VerifyReport:
    ok: bool
    checked: int
    failures: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def default_leaks(structure, target):
    names = set(structure.leaks())
    if target.relative:
        names.add(target.relative)
    return {n: 0x40000000 + (i + 1) * 0x01000000 for i, n in enumerate(sorted(names))}


def verify(structure, req, leaks=None):
    t = req.target
    aw = t.addr_width
    leaks = dict(leaks or default_leaks(structure, t))
    if t.relative and t.relative not in leaks:
        leaks[t.relative] = 0x40000000
    conc = concretize(structure, leaks)
    data_base = t.addr(t.data_base).resolve(leaks)
    failures = []
    checked = 0

    resident = _Mem()
    if conc.data_length:
        resident.map(data_base, conc.data())
    if t.resident:
        for i in range(conc.slot_count):
            resident.map(t.slot_addr(i).resolve(leaks), conc.slot(i))

    def value_ok(mem, got, want, width):
        if isinstance(want, Val):
            return got == want.resolve(leaks) & ((1 << (8 * width)) - 1)
        if isinstance(want, ConstRef):
            cell = got - want.addend
            inner = mem.read(cell, want.width)
            return value_ok(mem, inner, want.value, want.width)
        # a path: its location
        return got == locate(mem, want, cur_base)

    def locate(mem, path, base):
        a = t.anchors[path.anchor]
        loc = base + a.slot_offset if a.in_slot else a.address.resolve(leaks)
        for s in path.steps:
            if s[0] == "off":
                loc += s[1]
            else:
                loc = mem.read(loc, aw)
        return loc

    for inst, (off, n, _) in zip(req.instances, conc.regions):
        cur_base = t.slot_addr(inst.index).resolve(leaks)
        if t.resident:
            mem = resident
        else:
            mem = _Mem()
            if conc.data_length:
                mem.map(data_base, conc.data())
            mem.map(cur_base, conc.image[off:off + n])
        for eq in inst.equations:
            checked += 1
            try:
                loc = locate(mem, eq.path, cur_base)
                got = mem.read(loc, eq.width)
                if not value_ok(mem, got, eq.value, eq.width):
                    failures.append((inst.index, str(eq.path), f"{got:#x}", str(eq.value)))
            except LookupError as e:
                failures.append((inst.index, str(eq.path), "unmapped", str(e)))
    lay = req.layout
    data = conc.data()
    for doff, w, v in lay.data_items:
        checked += 1
        got = int.from_bytes(data[doff:doff + w], "little")
        if isinstance(v, ConstRef):
            failures.append(("data", doff, "constref", str(v)))
        elif got != v.resolve(leaks) & ((1 << (8 * w)) - 1):
            failures.append(("data", doff, f"{got:#x}", str(v)))
    return VerifyReport(not failures, checked, failures)
