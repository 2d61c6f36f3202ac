"""Gadget definitions and the data-view switch.

A gadget definition lists the memory facts that make the target run one
native operation::

    gadget mov32 dst src
        ptr deref offset(0) = 3:int32     # a width-tagged constant
        ptr deref offset(4) = src         # a formal: the operand's address
        srv = p-8                         # formal plus a constant
        bufp = buf                        # another path: its location
        reserved ptr deref offset(12) 4   # bytes the gadget clobbers

A path starts at an anchor (a cell the target exposes) and applies
``deref``, ``offset(k)`` and ``index<type>(k)`` steps. The left side is the
location written; the right side is the value stored there.
"""

import re
from dataclasses import dataclass, field

from .asm.interp import label_indices
from .asm.ir import (
    ADDR, ANCHOR, CREF, IMM, LABEL, LEAK, REC, SIGNATURES, VAR, Directive, Instruction, LabelDef,
)
from .asm.parser import split_mnemonic
from .builder.terms import ConstRef, Val
from .errors import GadgetDefError
from .types import KIND_WIDTHS

_STEP_RE = re.compile(r"(deref)$|offset\((-?(?:0x[0-9a-fA-F]+|\d+))\)$|index<(\w+)>\((\d+)\)$")
_CONST_RE = re.compile(r"(-?(?:0x[0-9a-fA-F]+|\d+)):(\w+)$")
_FORMAL_RE = re.compile(r"([A-Za-z_]\w*)([+-](?:0x[0-9a-fA-F]+|\d+))?$")

BLOCK_LABEL_RE = re.compile(r"bf\.bb(\d+)$")


@dataclass(frozen=True)
class Path:
    anchor: str
    steps: tuple = ()          # ("deref",) or ("off", k); offsets merged

    def __str__(self):
        parts = [self.anchor]
        for s in self.steps:
            parts.append("deref" if s[0] == "deref" else f"offset({s[1]})")
        return " ".join(parts)


def make_path(anchor, raw_steps):
    steps = []
    for s in raw_steps:
        if s[0] == "off":
            if s[1] == 0:
                continue
            if steps and steps[-1][0] == "off":
                steps[-1] = ("off", steps[-1][1] + s[1])
                if steps[-1][1] == 0:
                    steps.pop()
                continue
        steps.append(s)
    return Path(anchor, tuple(steps))


@dataclass(frozen=True)
class Const:
    value: int
    width: int


@dataclass(frozen=True)
class FormalRef:
    name: str
    addend: int = 0


@dataclass
class GadgetDef:
    mnemonic: str
    formals: tuple
    equations: list = field(default_factory=list)   # (Path, rhs)
    reserved: list = field(default_factory=list)    # (Path, length)
    line: int = None

    @property
    def signature(self):
        if self.mnemonic == "nop":
            return ("nop", 0)
        return split_mnemonic(self.mnemonic)


def _parse_path(words, anchors, line, addr_width):
    if not words:
        raise GadgetDefError(f"line {line}: empty path")
    anchor = words[0]
    if anchors is not None and anchor not in anchors:
        raise GadgetDefError(f"line {line}: unknown anchor {anchor!r}")
    steps = []
    for w in words[1:]:
        m = _STEP_RE.match(w)
        if not m:
            raise GadgetDefError(f"line {line}: bad path step {w!r}")
        if m.group(1):
            steps.append(("deref",))
        elif m.group(2) is not None:
            steps.append(("off", int(m.group(2), 0)))
        else:
            t = m.group(3)
            width = addr_width if t == "addr" else KIND_WIDTHS.get(t)
            if width is None:
                raise GadgetDefError(f"line {line}: unknown type {t!r}")
            steps.append(("off", int(m.group(4)) * width))
    return make_path(anchor, steps)


def _type_width(t, addr_width, line):
    if t == "addr":
        return addr_width
    if t not in KIND_WIDTHS:
        raise GadgetDefError(f"line {line}: unknown type {t!r}")
    return KIND_WIDTHS[t]


def parse_gdef(text, addr_width=4, anchors=None):
    """Parse a ``.gdef`` file; ``anchors`` (a set) enables anchor checking."""
    defs = {}
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        words = line.split()
        if words[0] == "gadget":
            if len(words) < 2:
                raise GadgetDefError(f"line {lineno}: gadget without a name")
            name = words[1]
            if name != "nop":
                try:
                    opcode, _ = split_mnemonic(name)
                except Exception as e:
                    raise GadgetDefError(f"line {lineno}: {e}") from None
                want = len(SIGNATURES[opcode])
                if len(words) - 2 != want:
                    raise GadgetDefError(f"line {lineno}: {name} takes {want} formals")
            if name in defs:
                raise GadgetDefError(f"line {lineno}: duplicate gadget {name}")
            cur = GadgetDef(name, tuple(w.lstrip(":") for w in words[2:]), line=lineno)
            defs[name] = cur
            continue
        if cur is None:
            raise GadgetDefError(f"line {lineno}: equation outside a gadget")
        if words[0] == "reserved":
            cur.reserved.append((_parse_path(words[1:-1], anchors, lineno, addr_width),
                                 int(words[-1], 0)))
            continue
        if "=" not in words:
            raise GadgetDefError(f"line {lineno}: expected 'path = value'")
        k = words.index("=")
        lhs = _parse_path(words[:k], anchors, lineno, addr_width)
        rhs_words = words[k + 1:]
        if len(rhs_words) == 1:
            w = rhs_words[0]
            m = _CONST_RE.match(w)
            if m:
                rhs = Const(int(m.group(1), 0), _type_width(m.group(2), addr_width, lineno))
            elif w.startswith("&"):
                rhs = _parse_path([w[1:]], anchors, lineno, addr_width)
            else:
                m = _FORMAL_RE.match(w)
                if not m:
                    raise GadgetDefError(f"line {lineno}: bad value {w!r}")
                name = m.group(1)
                if name in cur.formals:
                    rhs = FormalRef(name, int(m.group(2) or "0", 0))
                elif m.group(2) is None:
                    rhs = _parse_path([name], anchors, lineno, addr_width)
                else:
                    raise GadgetDefError(f"line {lineno}: unknown formal {name!r}")
        else:
            rhs = _parse_path(rhs_words, anchors, lineno, addr_width)
        cur.equations.append((lhs, rhs))
    for d in defs.values():
        used = {rhs.name for _, rhs in d.equations if isinstance(rhs, FormalRef)}
        for f in d.formals:
            if f not in used:
                raise GadgetDefError(f"line {d.line}: formal {f!r} of {d.mnemonic} is never used")
    return defs


def load_gadget_defs(target):
    with open(target.path("gadgets.gdef")) as fh:
        defs = parse_gdef(fh.read(), target.addr_width, target.anchor_names())
    declared = set(target.natives)
    have = {n for n in defs if n != "nop"}
    if declared != have:
        missing = sorted(declared - have)
        extra = sorted(have - declared)
        raise GadgetDefError(
            f"target {target.name}: natives and gadget definitions disagree"
            f" (missing {missing}, undeclared {extra})")
    return defs


# -- data-view switch -----------------------------------------------------------

@dataclass(frozen=True)
class Equation:
    path: Path
    width: int
    value: object          # Val, ConstRef, or Path (location of that path)


@dataclass
class Instance:
    index: int
    gadget: str
    equations: list
    reserved: list
    grow: int = 0
    block: int = 0
    text: str = ""


@dataclass
class DataRequirements:
    target: object
    instances: list
    layout: object          # builder.layout.Layout
    labels: dict

    def __len__(self):
        return len(self.instances)


def _const_width(width, aw):
    return max(width, aw)


def operand_term(o, role, width, target, layout, labels):
    """The value a gadget formal takes for operand ``o``."""
    aw = target.addr_width
    cw = _const_width(width, aw)
    mask = (1 << (8 * cw)) - 1
    k = o.kind
    if role == "L":
        if o.name not in labels:
            raise GadgetDefError(f"undefined label :{o.name}")
        return Val(labels[o.name])
    if k == VAR:
        return layout.address(o.name) + o.value
    if k == ANCHOR:
        a = target.anchors.get(o.name)
        if a is None:
            raise GadgetDefError(f"target {target.name} has no anchor @{o.name}")
        if a.in_slot:
            raise GadgetDefError(f"anchor @{o.name} lives in the packet and cannot be an operand")
        return a.address + o.value
    if k == REC:
        if not target.resident:
            raise GadgetDefError("rec() operands need resident records")
        if o.name not in labels:
            raise GadgetDefError(f"undefined label :{o.name}")
        return target.slot_addr(labels[o.name]) + o.value * aw
    if k == IMM:
        return layout.const(Val(o.value & ((1 << (8 * width)) - 1) & mask), cw)
    if k == LABEL:
        if o.name not in labels:
            raise GadgetDefError(f"undefined label :{o.name}")
        return layout.const(Val(labels[o.name]), cw)
    if k == ADDR:
        return layout.const(layout.address(o.name) + o.value, cw)
    if k == LEAK:
        return layout.const(Val(o.value, o.name), cw)
    if k == CREF:
        inner = operand_term(o.inner, "S", width, target, layout, labels)
        return layout.const(inner, aw)
    raise GadgetDefError(f"operand {o} cannot be bound to a gadget")


def bind_gadget(gdef, ins, target, layout, labels):
    aw = target.addr_width
    vals = {}
    if ins is not None:
        for f, o, role in zip(gdef.formals, ins.operands, SIGNATURES[ins.opcode]):
            vals[f] = operand_term(o, role, ins.width, target, layout, labels)
    eqs = []
    for path, rhs in gdef.equations:
        if isinstance(rhs, Const):
            eqs.append(Equation(path, rhs.width, Val(rhs.value & ((1 << (8 * rhs.width)) - 1))))
        elif isinstance(rhs, FormalRef):
            eqs.append(Equation(path, aw, vals[rhs.name] + rhs.addend))
        else:
            eqs.append(Equation(path, aw, rhs))
    return eqs


def data_view_switch(ll, target, defs=None, layout=None):
    """Turn a lowered program into per-instance data requirements."""
    from .builder.layout import plan_layout

    if defs is None:
        defs = load_gadget_defs(target)
    if layout is None:
        layout = plan_layout(ll, target)
    labels, _ = label_indices(ll)
    instances = []
    grow = 0
    block = 0
    for it in ll.items:
        if isinstance(it, LabelDef):
            m = BLOCK_LABEL_RE.search(it.name)
            if m:
                block = int(m.group(1))
            continue
        if isinstance(it, Directive):
            if it.name == "packet_grow":
                if target.resident:
                    raise GadgetDefError(".packet_grow needs a packet-based target")
                grow += it.value
            elif it.name == "advance_pc":
                if "nop" not in defs:
                    raise GadgetDefError(f"target {target.name} has no nop gadget for .advance_pc")
                for _ in range(it.value):
                    g = defs["nop"]
                    instances.append(Instance(len(instances), "nop", bind_gadget(g, None, target, layout, labels),
                                              list(g.reserved), 0, block, "nop"))
            continue
        if not isinstance(it, Instruction):
            continue
        g = defs.get(it.mnemonic)
        if g is None:
            raise GadgetDefError(f"no gadget definition for {it.mnemonic} on {target.name}")
        eqs = bind_gadget(g, it, target, layout, labels)
        instances.append(Instance(len(instances), it.mnemonic, eqs, list(g.reserved), grow, block, str(it)))
        grow = 0
    layout.finish(labels)
    return DataRequirements(target, instances, layout, labels)
