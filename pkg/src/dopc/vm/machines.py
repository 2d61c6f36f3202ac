"""Simulated targets: load a concretized image into memory and run it."""

from dataclasses import dataclass

import numpy as np

from ..builder.image import concretize
from ..builder.verify import default_leaks
from ..errors import VmError
from . import kernels

DEFAULT_FUEL = 50_000_000


@dataclass
class RunResult:
    status: int
    steps: int
    mem: np.ndarray
    base: int

    @property
    def ok(self):
        return self.status in (kernels.OK, kernels.STOPPED)

    @property
    def status_name(self):
        return kernels.STATUS_NAMES[self.status]

    def read(self, addr, width):
        i = addr - self.base
        if i < 0 or i + width > len(self.mem):
            raise VmError(f"read outside target memory at {addr:#x}")
        return int.from_bytes(self.mem[i:i + width].tobytes(), "little")

    def read_bytes(self, addr, n):
        i = addr - self.base
        if i < 0 or i + n > len(self.mem):
            raise VmError(f"read outside target memory at {addr:#x}")
        return self.mem[i:i + n].tobytes()

    def dump(self, addr, n):
        """Hex lines, 16 bytes each, prefixed with their address."""
        data = self.read_bytes(addr, n)
        return "\n".join(f"{addr + k:08x}: {data[k:k + 16].hex(' ')}" for k in range(0, n, 16))


class Machine:
    """One target instance with its memory and planted fixture bytes."""

    def __init__(self, target, leaks=None, fixture=None, strict=False):
        self.target = target
        self.strict = strict
        self.leaks = dict(leaks or {})
        if target.relative and target.relative not in self.leaks:
            self.leaks[target.relative] = 0x40000000
        self.base = self.leaks.get(target.relative, 0) if target.relative else 0
        self.mem = np.zeros(target.memory_size, dtype=np.uint8)
        for addr, data in (fixture or {}).items():
            self.poke(addr, data)

    def poke(self, offset, data):
        """Write bytes at a region offset (absolute when not relative)."""
        data = np.frombuffer(bytes(data), dtype=np.uint8)
        if offset < 0 or offset + len(data) > len(self.mem):
            raise VmError(f"write outside target memory at {offset:#x}")
        self.mem[offset:offset + len(data)] = data

    def peek(self, offset, width):
        return int.from_bytes(self.mem[offset:offset + width].tobytes(), "little")

    def _load_data(self, conc):
        t = self.target
        if conc.data_length:
            self.poke(t.data_base, conc.data())

    def prepare(self, structure):
        t = self.target
        # strict machines refuse to invent values for unbound placeholders
        leaks = {} if self.strict else dict(default_leaks(structure, t))
        leaks.update(self.leaks)
        conc = concretize(structure, leaks)
        self._load_data(conc)
        return conc

    def result(self, status, steps):
        return RunResult(int(status), int(steps), self.mem, self.base)

    def run(self, structure, fuel=DEFAULT_FUEL, order=None):
        conc = self.prepare(structure)
        t = self.target
        if t.vm == "interp":
            return self._run_interp(conc, fuel)
        if t.vm == "moveonly":
            return self._run_moveonly(conc, fuel)
        if t.vm == "interactive":
            return self._run_interactive(conc, fuel, order)
        raise VmError(f"unknown vm {t.vm!r}")

    def _run_interp(self, conc, fuel):
        t = self.target
        for i in range(conc.slot_count):
            data = conc.slot(i)
            if len(data) > t.slot_size:
                raise VmError("resident records cannot grow")
            self.poke(t.slot_base + i * t.slot_size, data)
        pc = t.anchors["pc"].address.resolve(self.leaks) - self.base
        status, steps = kernels.interp_run(self.mem, np.int64(self.base), t.addr_width,
                                           np.int64(self.base + t.slot_base), t.slot_size,
                                           conc.slot_count, np.int64(pc + self.base), np.int64(fuel))
        return self.result(status, steps)

    def _packets(self, conc, limit):
        n = conc.slot_count
        lengths = np.array([len(conc.slot(i)) for i in range(n)], dtype=np.int64)
        width = max(int(lengths.max()) if n else 0, limit)
        packets = np.zeros((max(n, 1), width), dtype=np.uint8)
        for i in range(n):
            s = conc.slot(i)
            packets[i, :len(s)] = np.frombuffer(s, dtype=np.uint8)
        return packets[:n] if n else packets[:0], lengths

    def _run_moveonly(self, conc, fuel):
        t = self.target
        limit = t.max_packet or t.slot_size
        packets, lengths = self._packets(conc, limit)
        if len(lengths) and lengths.max() > limit:
            raise VmError(f"a packet of {int(lengths.max())} bytes exceeds the {limit}-byte limit")
        pc = t.anchors["pc"].address.const
        status, steps = kernels.moveonly_run(self.mem, packets, lengths, t.slot_base, limit, pc,
                                             np.int64(fuel))
        return self.result(status, steps)

    def _run_interactive(self, conc, fuel, order):
        t = self.target
        packets, lengths = self._packets(conc, t.slot_size)
        if len(lengths) and lengths.max() > t.slot_size:
            raise VmError("interactive packets cannot exceed the overflowed frame")
        if order is None:
            order = np.arange(conc.slot_count, dtype=np.int64)
        order = np.asarray(order, dtype=np.int64)
        # the frame's saved buf parameter holds the buffer address initially
        self.poke(t.slot_base + 80, t.slot_base.to_bytes(4, "little"))
        status, steps = kernels.interactive_run(
            self.mem, packets, lengths, order, t.slot_base,
            int(t.extra.get("stream", "0"), 0), int(t.extra.get("none", "0x454e4f4e"), 0),
            np.int64(fuel))
        return self.result(status, steps)


def run_structure(structure, target, leaks=None, fixture=None, fuel=DEFAULT_FUEL, order=None):
    m = Machine(target, leaks, fixture)
    return m.run(structure, fuel, order)
