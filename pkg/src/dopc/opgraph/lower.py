"""Rewrite a high-level DOP-Asm program into target-native ops only."""

from dataclasses import replace
from itertools import count

from ..asm.ir import IMM, LABEL, VAR, AsmProgram, Instruction, LabelDef, Operand, VarDecl
from ..errors import SynthesisError
from .graph import INF, _costs, and_or_report
from .recipes import instantiate

_KIND = {1: "byte", 2: "int16", 4: "int32", 8: "int64"}


def _is_imm(o, value=None):
    return o.kind == IMM and (value is None or o.value == value)


def _is_temp(o):
    return o.kind == VAR and o.value == 0 and o.name.startswith("%t")


class Lowering:
    def __init__(self, graph, peephole=True, first_id=0, known=()):
        self.graph = graph
        self.cost, self.choice = _costs(graph)
        self.peephole = peephole
        self.ids = count(first_id)
        self.once_seen = set(known)
        self.decls = []
        self.stats = {}

    def c(self, opcode, width):
        return self.cost.get((opcode, width), INF)

    def cheaper(self, a, b, w):
        """Use ``a`` for ``b`` with an immediate: on a tie only if ``a`` is native,
        which also saves the constant cell."""
        ca, cb = self.c(a, w), self.c(b, w)
        return ca < cb or (ca == cb and (a, w) in self.graph.native)

    def fresh(self, stem):
        return f"{stem}.{next(self.ids)}"

    # peepholes -------------------------------------------------------------

    def simplify(self, items):
        if not self.peephole:
            return items
        out = []
        i = 0
        while i < len(items):
            it = items[i]
            nxt = items[i + 1] if i + 1 < len(items) else None
            if isinstance(it, Instruction):
                rep = self._fold_compare(it, nxt)
                if rep is not None:
                    out.extend(rep)
                    i += 2
                    continue
                out.extend(self._simplify_one(it))
            else:
                out.append(it)
            i += 1
        return out

    def _simplify_one(self, ins):
        op, w, ops = ins.opcode, ins.width, ins.operands
        if op not in ("add", "sub", "mul") or not _is_imm(ops[1]):
            return [ins]
        mask = (1 << (8 * w)) - 1
        k = ops[1].value & mask
        d = ops[0]
        if op in ("add", "sub") and k == 0:
            return []
        # negating the immediate only pays off when add is a single gadget;
        # loop-based adds would iterate up to 2**bits times
        if op == "sub" and ("add", w) in self.graph.native and ("sub", w) not in self.graph.native:
            op, k = "add", (-k) & mask
            ins = replace(ins, opcode="add", operands=(d, Operand(IMM, None, k)))
        if op == "add" and k == 1 and self.cheaper("inc", "add", w):
            return [Instruction("inc", w, (d,), ins.line)]
        if op == "add" and k == mask and self.cheaper("dec", "add", w):
            return [Instruction("dec", w, (d,), ins.line)]
        if op == "sub" and k == 1 and self.cheaper("dec", "sub", w):
            return [Instruction("dec", w, (d,), ins.line)]
        if op == "mul" and ("mul", w) not in self.graph.native:
            return self._mul_chain(d, k, w, ins.line)
        return [ins]

    def _mul_chain(self, d, k, w, line):
        if k == 1:
            return []
        if k == 0:
            return [Instruction("mov", w, (d, Operand(IMM, None, 0)), line)]
        m = self.fresh("%mt")
        self.decls.append(VarDecl(m, _KIND[w]))
        mv = Operand(VAR, m, 0)
        out = [Instruction("mov", w, (mv, d), line)]
        for bit in bin(k)[3:]:
            out.append(Instruction("add", w, (d, d), line))
            if bit == "1":
                out.append(Instruction("add", w, (d, mv), line))
        return out

    def _fold_compare(self, ins, nxt):
        if not (isinstance(nxt, Instruction) and nxt.opcode == "if_zero_goto"):
            return None
        if ins.opcode not in ("eq", "neq") or nxt.width != ins.width:
            return None
        t = ins.operands[0]
        if not _is_temp(t) or nxt.operands[0] != t:
            return None
        w = ins.width
        sub = Instruction("sub", w, (t, ins.operands[1]), ins.line)
        if ins.opcode == "neq":
            if self.c("sub", w) < self.c("neq", w):
                return self._simplify_one(sub) + [nxt]
            return None
        if self.c("sub", w) + self.c("goto", 0) < self.c("eq", w):
            skip = self.fresh("%pk")
            return self._simplify_one(sub) + [
                Instruction("if_zero_goto", w, (t, Operand(LABEL, skip)), nxt.line),
                Instruction("goto", 0, (nxt.operands[1],), nxt.line),
                LabelDef(skip),
            ]
        return None

    # expansion ---------------------------------------------------------------

    def expand(self, items, out, depth=0):
        if depth > 64:
            raise SynthesisError("recipe expansion too deep")
        for it in self.simplify(items):
            if isinstance(it, VarDecl):
                self.decls.append(it)
            elif isinstance(it, Instruction):
                self.emit(it, out, depth)
            else:
                out.append(it)

    def emit(self, ins, out, depth):
        sig = ins.signature
        if sig in self.graph.native:
            out.append(ins)
            self.stats[ins.mnemonic] = self.stats.get(ins.mnemonic, 0) + 1
            return
        r = self.choice.get(sig)
        if r is None:
            raise SynthesisError(f"cannot synthesize {ins.mnemonic} (line {ins.line})",
                                 and_or_report(self.graph, [sig]))
        body = instantiate(r, ins.operands, next(self.ids), self.once_seen)
        self.expand(body.items, out, depth + 1)


def lower(hl, graph, peephole=True, validate=True, first_id=0, known=()):
    """Expand every non-native op through its cheapest recipe.

    Declarations are hoisted to the top; labels and directives keep their
    relative positions. ``first_id`` and ``known`` (names already declared)
    let a fragment be lowered separately and spliced into a program.
    """
    lw = Lowering(graph, peephole, first_id, known)
    body = []
    lw.expand(hl.items, body)
    prog = AsmProgram(lw.decls + body, dict(hl.loop_bounds))
    if validate:
        prog.validate()
    prog.stats = lw.stats
    return prog


def used_ops(prog):
    return {i.signature for i in prog.instructions}
