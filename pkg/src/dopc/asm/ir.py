"""In-memory form of DOP-Asm programs.

All opcodes follow the dereferencing convention: an operand names a cell and
the opcode acts on the cell contents, so ``add32 p q`` is ``*p += *q``,
``load32 p q`` is ``*p = **q`` and ``store32 p q`` is ``**p = *q``.
Immediates in source position denote a cell holding that constant.
"""

from dataclasses import dataclass, field, replace

from ..errors import AsmError
from ..types import KIND_WIDTHS

# operand kinds
VAR = "var"
ANCHOR = "anchor"
IMM = "imm"
LABEL = "label"
ADDR = "addr"
REC = "rec"
LEAK = "leak"
EXPR = "expr"
CREF = "cref"      # address of a constant cell holding ``inner``: ``&(5)``, ``&(&x+3)``

CELL_KINDS = frozenset({VAR, ANCHOR, REC})
VALUE_KINDS = frozenset({VAR, ANCHOR, REC, IMM, LABEL, ADDR, LEAK, EXPR, CREF})

# operand roles: D = destination cell, S = source value, C = condition value,
# L = jump target
SIGNATURES = {
    "mov": "DS",
    "add": "DS",
    "sub": "DS",
    "mul": "DS",
    "and": "DS",
    "or": "DS",
    "eq": "DS",
    "neq": "DS",
    "gte": "DS",
    "inc": "D",
    "dec": "D",
    "load": "DS",
    "store": "SS",
    "goto": "L",
    "if_zero_goto": "CL",
    "cond_mov": "CDS",
    "cond_load": "CDS",
    "cond_inc": "CD",
    "add_ind": "SS",      # *(*p + 4) += *q, the interactive target's fixed offset
}
UNSIZED = frozenset({"goto"})
GOTO_CLASS = frozenset({"goto", "if_zero_goto"})
CONDITIONAL = {"cond_mov": "mov", "cond_load": "load", "cond_inc": "inc"}
DIRECTIVES = frozenset({"advance_pc", "packet_grow"})


@dataclass(frozen=True)
class Operand:
    kind: str
    name: str = None
    value: int = 0
    inner: "Operand" = None

    def __str__(self):
        k = self.kind
        if k == CREF:
            return f"&({self.inner})"
        if k == IMM:
            return str(self.value)
        if k == LABEL:
            return ":" + self.name
        if k == EXPR:
            return "$(" + self.name + ")"
        if k == REC:
            return f"rec(:{self.name},{self.value})"
        if k == LEAK:
            return f"leak({self.name}){_signed(self.value)}"
        prefix = {VAR: "", ANCHOR: "@", ADDR: "&"}[k]
        return f"{prefix}{self.name}{_signed(self.value)}"

    def shifted(self, delta):
        if self.kind not in (VAR, ANCHOR, ADDR, LEAK, IMM):
            raise AsmError(f"cannot offset operand {self}")
        return replace(self, value=self.value + delta)


def _signed(v):
    if v == 0:
        return ""
    return f"+{v}" if v > 0 else f"{v}"


def cref(inner):
    return Operand(CREF, None, 0, inner)


def var(name, offset=0):
    return Operand(VAR, name, offset)


def imm(value):
    return Operand(IMM, None, value)


def label(name):
    return Operand(LABEL, name)


def addr_of(name, offset=0):
    return Operand(ADDR, name, offset)


def anchor(name, offset=0):
    return Operand(ANCHOR, name, offset)


@dataclass(frozen=True)
class Instruction:
    opcode: str
    width: int
    operands: tuple
    line: int = None

    @property
    def mnemonic(self):
        if self.opcode in UNSIZED:
            return self.opcode
        return f"{self.opcode}{self.width * 8}"

    @property
    def signature(self):
        return (self.opcode, self.width)

    def __str__(self):
        return " ".join([self.mnemonic] + [str(o) for o in self.operands])

    def jump_targets(self):
        sig = SIGNATURES[self.opcode]
        return [o.name for o, r in zip(self.operands, sig) if r == "L"]


@dataclass(frozen=True)
class LabelDef:
    name: str
    line: int = None

    def __str__(self):
        return ":" + self.name


@dataclass(frozen=True)
class Directive:
    name: str
    value: int
    line: int = None

    def __str__(self):
        return f".{self.name} {self.value}"


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str
    count: int = None
    init: tuple = None
    align: int = None
    address: int = None
    once: bool = False
    line: int = None

    def elem_width(self, addr_width):
        return addr_width if self.kind == "addr" else KIND_WIDTHS[self.kind]

    def size(self, addr_width):
        return self.elem_width(addr_width) * (self.count or 1)

    def __str__(self):
        parts = []
        if self.once:
            parts.append("%once")
        parts.append(self.kind)
        parts.append(self.name if self.count is None else f"{self.name}[{self.count}]")
        if self.align:
            parts.append(f"align {self.align}")
        if self.address is not None:
            parts.append(f"at {self.address:#x}")
        if self.init is not None:
            parts.append("= " + ", ".join(str(v) for v in self.init))
        return " ".join(parts)


def opcode_key(opcode, width):
    """Printable signature such as ``add32`` or ``goto``."""
    return opcode if opcode in UNSIZED else f"{opcode}{width * 8}"


@dataclass
class AsmProgram:
    items: list = field(default_factory=list)
    loop_bounds: dict = field(default_factory=dict)

    @property
    def instructions(self):
        return [i for i in self.items if isinstance(i, Instruction)]

    @property
    def decls(self):
        return [i for i in self.items if isinstance(i, VarDecl)]

    @property
    def labels(self):
        return [i.name for i in self.items if isinstance(i, LabelDef)]

    def symbols(self):
        table = {}
        for d in self.decls:
            if d.name in table:
                raise AsmError(f"duplicate declaration {d.name}", d.line)
            table[d.name] = d
        return table

    def opcodes(self):
        return {i.signature for i in self.instructions}

    def copy(self, items=None):
        return AsmProgram(list(self.items if items is None else items), dict(self.loop_bounds))

    def validate(self):
        """Check label uniqueness and that every referenced label exists."""
        seen = set()
        for it in self.items:
            if isinstance(it, LabelDef):
                if it.name in seen:
                    raise AsmError(f"label :{it.name} defined twice", it.line)
                seen.add(it.name)
        for it in self.items:
            refs = []
            if isinstance(it, Instruction):
                refs = [o.name for o in it.operands if o.kind in (LABEL, REC)]
            elif isinstance(it, VarDecl) and it.init:
                refs = [o.name for o in it.init if o.kind == LABEL]
            for r in refs:
                if r not in seen:
                    raise AsmError(f"undefined label :{r}", getattr(it, "line", None))
        return self

    def __str__(self):
        from .parser import format_asm

        return format_asm(self)
