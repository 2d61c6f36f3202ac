"""Reference interpreter for expanded DOP-Asm over a flat little-endian memory.

This is the semantic oracle every transform is checked against, so it is kept
deliberately literal: one dispatch per instruction, no shared code with the
target VMs.
"""

from dataclasses import dataclass, field

from ..errors import FuelExhausted, InterpError
from .ir import (
    ADDR, ANCHOR, CREF, EXPR, IMM, LABEL, LEAK, REC, SIGNATURES, VAR,
    Directive, Instruction, LabelDef,
)

DEFAULT_FUEL = 10**8


@dataclass
class MemoryImage:
    mem: bytearray
    addr: dict = field(default_factory=dict)
    addr_width: int = 4
    anchors: dict = field(default_factory=dict)
    leaks: dict = field(default_factory=dict)
    steps: int = 0
    code_base: int = None
    crefs: dict = field(default_factory=dict)

    def read(self, a, w):
        if a < 0 or a + w > len(self.mem):
            raise InterpError(f"out-of-bounds read at {a:#x}")
        return int.from_bytes(self.mem[a:a + w], "little")

    def write(self, a, w, v):
        if a < 0 or a + w > len(self.mem):
            raise InterpError(f"out-of-bounds write at {a:#x}")
        self.mem[a:a + w] = (v & ((1 << (8 * w)) - 1)).to_bytes(w, "little")

    def read_var(self, name, width, index=0):
        return self.read(self.addr[name] + index * width, width)

    def write_var(self, name, width, value, index=0):
        self.write(self.addr[name] + index * width, width, value)

    def copy(self):
        return MemoryImage(bytearray(self.mem), dict(self.addr), self.addr_width,
                           dict(self.anchors), dict(self.leaks), self.steps, self.code_base, dict(self.crefs))


def label_indices(prog):
    """Instruction-slot index of every label; ``.advance_pc n`` inserts n slots."""
    idx, out = 0, {}
    for it in prog.items:
        if isinstance(it, LabelDef):
            out[it.name] = idx
        elif isinstance(it, Instruction):
            idx += 1
        elif isinstance(it, Directive) and it.name == "advance_pc":
            idx += it.value
    return out, idx


def code_slots(prog):
    slots = []
    for it in prog.items:
        if isinstance(it, Instruction):
            slots.append(it)
        elif isinstance(it, Directive) and it.name == "advance_pc":
            slots.extend([None] * it.value)
    return slots


def layout_memory(prog, size=1 << 20, addr_width=4, base=0x1000, anchors=None, leaks=None):
    """Place every declaration in a fresh zeroed memory and apply initializers."""
    m = MemoryImage(bytearray(size), {}, addr_width, {}, dict(leaks or {}))
    cur = base
    for d in prog.decls:
        w = d.elem_width(addr_width)
        if d.address is not None:
            m.addr[d.name] = d.address
            continue
        align = d.align or min(w, addr_width)
        cur = (cur + align - 1) // align * align
        m.addr[d.name] = cur
        cur += d.size(addr_width)
    anchor_names = set(anchors or {})
    for it in prog.instructions:
        for o in it.operands:
            if o.kind == ANCHOR:
                anchor_names.add(o.name)
    for name in sorted(anchor_names):
        if anchors and name in anchors:
            m.anchors[name] = anchors[name]
        else:
            cur = (cur + addr_width - 1) // addr_width * addr_width
            m.anchors[name] = cur
            cur += 8
    m.anchors.setdefault("pc", None)
    if m.anchors["pc"] is None:
        cur = (cur + 7) // 8 * 8
        m.anchors["pc"] = cur
        cur += 8
    labels, _ = label_indices(prog)
    m.crefs = {}
    for it in prog.instructions:
        for o in it.operands:
            while o.kind == CREF:
                if o not in m.crefs:
                    cur = (cur + 7) // 8 * 8
                    m.crefs[o] = cur
                    cur += 8
                o = o.inner
    m.code_base = (cur + 15) // 16 * 16
    if m.code_base + 4 * addr_width * len(code_slots(prog)) > size:
        raise InterpError("memory too small for program")
    for o, a in m.crefs.items():
        m.write(a, 8, _static_value(o.inner, m, labels))
    for d in prog.decls:
        if d.init is None:
            continue
        w = d.elem_width(addr_width)
        vals = list(d.init)
        n = d.count or 1
        if len(vals) > n:
            raise InterpError(f"too many initializers for {d.name}")
        for i, v in enumerate(vals):
            m.write(m.addr[d.name] + i * w, w, _static_value(v, m, labels))
    return m


def _static_value(o, m, labels):
    if o.kind == IMM:
        return o.value
    if o.kind == LABEL:
        return labels[o.name]
    if o.kind == ADDR:
        return m.addr[o.name] + o.value
    if o.kind == CREF:
        if o not in m.crefs:
            raise InterpError(f"no constant cell for {o}")
        return m.crefs[o]
    if o.kind == LEAK:
        if o.name not in m.leaks:
            raise InterpError(f"unbound leak {o.name}")
        return m.leaks[o.name] + o.value
    raise InterpError(f"bad initializer {o}")


def interpret(prog, memory, fuel=DEFAULT_FUEL):
    """Run ``prog`` on ``memory`` (a MemoryImage from ``layout_memory``).

    Returns a new MemoryImage; raises FuelExhausted when the budget runs out.
    Writing the ``@pc`` cell redirects control to the written slot index.
    """
    if fuel <= 0:
        raise InterpError("fuel must be positive")
    m = memory.copy()
    aw = m.addr_width
    labels, nslots = label_indices(prog)
    slots = code_slots(prog)
    resident = any(o.kind == REC for i in prog.instructions for o in i.operands)
    code_base = memory.code_base
    if code_base is None:
        code_base = len(m.mem) - 4 * aw * max(nslots, 1)
    rec_size = 4 * aw

    def cell_addr(o):
        if o.kind == VAR:
            if o.name not in m.addr:
                raise InterpError(f"undeclared variable {o.name}")
            return m.addr[o.name] + o.value
        if o.kind == ANCHOR:
            if o.name not in m.anchors:
                raise InterpError(f"unknown anchor @{o.name}")
            return m.anchors[o.name] + o.value
        if o.name not in labels:
            raise InterpError(f"jump to undefined label :{o.name}")
        return code_base + labels[o.name] * rec_size + o.value * aw

    # decode: each operand becomes ("c", address-or-record-word) or ("i", value)
    decoded = []
    for slot, ins in enumerate(slots):
        if ins is None:
            decoded.append(None)
            continue
        ops = []
        for k, (o, role) in enumerate(zip(ins.operands, SIGNATURES[ins.opcode])):
            if role == "L":
                if o.name not in labels:
                    raise InterpError(f"jump to undefined label :{o.name}")
                ops.append(("l", labels[o.name]))
            elif o.kind in (VAR, ANCHOR, REC):
                a = cell_addr(o)
                if resident:
                    word = code_base + slot * rec_size + (k + 1) * aw
                    m.write(word, aw, a)
                    ops.append(("r", word))
                else:
                    ops.append(("c", a))
            elif o.kind == EXPR:
                raise InterpError("unexpanded macro in program")
            else:
                ops.append(("i", _static_value(o, m, labels)))
        decoded.append((ins.opcode, ins.width, (1 << (8 * ins.width)) - 1, ops))

    pc_cell = m.anchors["pc"]
    read, write = m.read, m.write

    def addr_of(op):
        return read(op[1], aw) if op[0] == "r" else op[1]

    def val(op, w):
        if op[0] == "i":
            return op[1]
        return read(addr_of(op), w)

    def ptr(op):
        if op[0] == "i":
            return op[1]
        return read(addr_of(op), aw)

    pc = 0
    steps = 0
    while 0 <= pc < nslots:
        if steps >= fuel:
            m.steps = steps
            err = FuelExhausted(f"fuel exhausted after {steps} instructions")
            err.memory = m
            raise err
        steps += 1
        write(pc_cell, aw, pc + 1)
        d = decoded[pc]
        if d is not None:
            opc, w, msk, ops = d
            jump = None
            if opc == "mov":
                write(addr_of(ops[0]), w, val(ops[1], w))
            elif opc in ("add", "sub", "mul", "and", "or", "eq", "neq", "gte"):
                a = addr_of(ops[0])
                x, y = read(a, w), val(ops[1], w) & msk
                if opc == "add":
                    r = x + y
                elif opc == "sub":
                    r = x - y
                elif opc == "mul":
                    r = x * y
                elif opc == "and":
                    r = x & y
                elif opc == "or":
                    r = x | y
                elif opc == "eq":
                    r = int(x == y)
                elif opc == "neq":
                    r = int(x != y)
                else:
                    r = int(x >= y)
                write(a, w, r)
            elif opc in ("inc", "dec"):
                a = addr_of(ops[0])
                write(a, w, read(a, w) + (1 if opc == "inc" else -1))
            elif opc == "load":
                write(addr_of(ops[0]), w, read(ptr(ops[1]), w))
            elif opc == "store":
                write(ptr(ops[0]), w, val(ops[1], w))
            elif opc == "goto":
                jump = ops[0][1]
            elif opc == "if_zero_goto":
                if val(ops[0], w) & msk == 0:
                    jump = ops[1][1]
            elif opc == "cond_mov":
                if val(ops[0], w) & msk == 0:
                    write(addr_of(ops[1]), w, val(ops[2], w))
            elif opc == "cond_load":
                if val(ops[0], w) & msk == 0:
                    write(addr_of(ops[1]), w, read(ptr(ops[2]), w))
            elif opc == "cond_inc":
                if val(ops[0], w) & msk == 0:
                    a = addr_of(ops[1])
                    write(a, w, read(a, w) + 1)
            elif opc == "add_ind":
                a = ptr(ops[0]) + 4
                write(a, w, read(a, w) + val(ops[1], w))
            else:
                raise InterpError(f"no semantics for {opc}")
            if jump is not None:
                write(pc_cell, aw, jump)
        pc = read(pc_cell, aw)
    m.steps = steps
    return m
