"""Code generation from checked payload scripts to HL-DOP-asm.

Procedures are inlined at their call sites and locals are static, so the
output is one straight program. Arithmetic is done at the width of the
widest operand but at least 32 bits; narrower cells are zero-extended into
temporaries first. Comparisons are unsigned unless an operand is wrapped in
``signed()``.
"""

from ..asm.ir import (
    LEAK, AsmProgram, Instruction, LabelDef, Operand, VarDecl, addr_of, imm, label, var,
)
from ..asm.parser import parse_asm
from ..errors import SlangError
from ..types import KIND_WIDTHS, mask, width_name
from . import ast as A
from .parser import fold, parse_payload

_ARITH_OP = {"+": "add", "-": "sub", "*": "mul", "&": "and", "|": "or",
             "==": "eq", "!=": "neq", ">=": "gte"}


def kind_width(kind, aw):
    return aw if kind == "addr" else KIND_WIDTHS[kind]


class Compiler:
    def __init__(self, ast, addr_width=4, maxiter_default=None):
        self.ast = ast
        self.aw = addr_width
        self.maxiter_default = maxiter_default
        self.code = []
        self.decls = []
        self.bounds = {}
        self.labels = 0
        self.temps = {}          # width -> in use this statement
        self.temp_max = {}       # width -> high-water mark
        self.loops = []          # (continue label, exit label)
        self.inlining = []

    # -- helpers -------------------------------------------------------------

    def error(self, msg, node):
        line, col = getattr(node, "line", 0), getattr(node, "col", 0)
        return SlangError(msg, line, col, [(line, col, msg)])

    def emit(self, opcode, width, *ops):
        self.code.append(Instruction(opcode, width, tuple(ops)))

    def new_label(self, stem):
        self.labels += 1
        return f"%{stem}{self.labels}"

    def place(self, name):
        self.code.append(LabelDef(name))

    def temp(self, w):
        k = self.temps.get(w, 0)
        self.temps[w] = k + 1
        self.temp_max[w] = max(self.temp_max.get(w, 0), k + 1)
        return var(f"%t{w * 8}_{k}")

    def reset_temps(self):
        self.temps = {}

    def sym_width(self, sym):
        return kind_width(sym.kind, self.aw)

    def width(self, e):
        """Width of the value of ``e``; None for constants."""
        if isinstance(e, A.Num):
            return None
        if isinstance(e, A.Name):
            return self.sym_width(e.sym)
        if isinstance(e, A.Index):
            return self.sym_width(e.sym)
        if isinstance(e, A.Mem):
            return kind_width(e.kind, self.aw)
        if isinstance(e, (A.AddrOf, A.Leak)):
            return self.aw
        if isinstance(e, A.Unary):
            if e.op == "signed":
                return self.width(e.operand)
            if fold(e) is not None:
                return None
            return max(4, self.width(e.operand) or 0)
        if isinstance(e, A.Binary):
            if fold(e) is not None:
                return None
            return max(4, self.width(e.left) or 0, self.width(e.right) or 0)
        raise self.error(f"unsupported expression {type(e).__name__}", e)

    # -- values --------------------------------------------------------------

    def widen(self, op, w_from, w_to):
        """``op`` readable at ``w_to`` bytes with the same (zero-extended) value."""
        if op.kind != "var" or w_from is None:
            if op.kind == "imm":
                return imm(op.value & mask(w_to))
            return op
        if w_from >= w_to:
            return op
        t = self.temp(w_to)
        self.emit("mov", w_to, t, imm(0))
        self.emit("mov", w_from, t, op)
        return t

    def const_index(self, e):
        if isinstance(e, A.Index):
            k = fold(e.index)
            if k is not None:
                if not 0 <= k < e.sym.count:
                    raise self.error(f"index {k} out of bounds for {e.name}[{e.sym.count}]", e)
                return k
        return None

    def element_pointer(self, sym, index):
        """Temp (address width) holding &sym[index]."""
        aw = self.aw
        w = self.sym_width(sym)
        p = self.temp(aw)
        self.emit("mov", aw, p, addr_of(sym.mangled))
        iv, iw = self.value(index)
        if iv.kind == "imm":
            self.emit("add", aw, p, imm((iv.value * w) & mask(aw)))
            return p
        if w == 1:
            self.emit("add", aw, p, self.widen(iv, iw, aw))
            return p
        s = self.temp(aw)
        if iw is not None and iw < aw:
            self.emit("mov", aw, s, imm(0))
        self.emit("mov", min(iw, aw), s, iv)
        self.emit("mul", aw, s, imm(w))
        self.emit("add", aw, p, s)
        return p

    def pointer(self, e):
        """A cell holding the address ``e`` evaluates to."""
        op, w = self.value(e)
        if op.kind == "var":
            return self.widen(op, w, self.aw)
        p = self.temp(self.aw)
        self.emit("mov", self.aw, p, op)
        return p

    def location(self, target):
        """(cell or None, pointer or None, width) for an assignable expression."""
        if isinstance(target, A.Name):
            return var(target.sym.mangled), None, self.sym_width(target.sym)
        if isinstance(target, A.Index):
            w = self.sym_width(target.sym)
            k = self.const_index(target)
            if k is not None:
                return var(target.sym.mangled, k * w), None, w
            return None, self.element_pointer(target.sym, target.index), w
        if isinstance(target, A.Mem):
            return None, self.pointer(target.addr), kind_width(target.kind, self.aw)
        raise self.error("expression is not assignable", target)

    def load(self, p, w):
        t = self.temp(max(4, w))
        if w < 4:
            self.emit("mov", 4, t, imm(0))
        self.emit("load", w, t, p)
        return t, max(4, w)

    def value(self, e):
        """Evaluate ``e``; returns (operand, width). Constants come back as imm."""
        c = fold(e)
        if c is not None:
            return imm(c), None
        if isinstance(e, A.Name):
            return var(e.sym.mangled), self.sym_width(e.sym)
        if isinstance(e, A.Index):
            cell, p, w = self.location(e)
            if cell is not None:
                return cell, w
            return self.load(p, w)
        if isinstance(e, A.Mem):
            w = kind_width(e.kind, self.aw)
            return self.load(self.pointer(e.addr), w)
        if isinstance(e, A.AddrOf):
            w = self.sym_width(e.sym)
            if e.index is None:
                return addr_of(e.sym.mangled), None
            k = fold(e.index)
            if k is not None:
                return addr_of(e.sym.mangled, k * w), None
            return self.element_pointer(e.sym, e.index), self.aw
        if isinstance(e, A.Leak):
            return Operand(LEAK, e.name, e.offset), None
        if isinstance(e, A.Unary) and e.op == "signed":
            raise self.error("signed() only applies to comparison operands", e)
        w = self.width(e)
        t = self.temp(w)
        self.compute(t, w, e)
        return t, w

    def compute(self, acc, w, e):
        """Evaluate non-constant ``e`` (width ``w``) into cell ``acc``."""
        if isinstance(e, A.Unary):
            if e.op == "-":
                xv, xw = self.value(e.operand)
                x = self.widen(xv, xw, w)
                self.emit("mov", w, acc, imm(0))
                self.emit("sub", w, acc, x)
            else:
                self.load_into(acc, w, e.operand)
                self.emit("eq", w, acc, imm(0))
            return
        if not isinstance(e, A.Binary):
            self.load_into(acc, w, e)
            return
        op, left, right = e.op, e.left, e.right
        if op in (">", "<="):
            left, right = right, left
            op = {">": "<", "<=": ">="}[op]
        signed = False
        if op in A.COMPARE:
            if isinstance(left, A.Unary) and left.op == "signed":
                signed, left = True, left.operand
            if isinstance(right, A.Unary) and right.op == "signed":
                signed, right = True, right.operand
        self.load_into(acc, w, left)
        r = self.operand_at(right, w)
        if signed:
            bias = 1 << (8 * w - 1)
            self.emit("add", w, acc, imm(bias))
            if r.kind == "imm":
                r = imm((r.value + bias) & mask(w))
            else:
                t = self.temp(w)
                self.emit("mov", w, t, r)
                self.emit("add", w, t, imm(bias))
                r = t
        if op == "<":
            self.emit("gte", w, acc, r)
            self.emit("eq", w, acc, imm(0))
        else:
            self.emit(_ARITH_OP[op], w, acc, r)

    def operand_at(self, e, w):
        v, vw = self.value(e)
        return self.widen(v, vw, w)

    def load_into(self, dest, wd, e):
        """dest (wd bytes) = e, truncating or zero-extending."""
        c = fold(e)
        if c is not None:
            self.emit("mov", wd, dest, imm(c & mask(wd)))
            return
        if isinstance(e, (A.Binary, A.Unary)) and e.op != "signed" and self.width(e) == wd:
            self.compute(dest, wd, e)
            return
        v, vw = self.value(e)
        self.mov_into(dest, wd, v, vw)

    def mov_into(self, dest, wd, v, vw):
        if v.kind == "imm":
            self.emit("mov", wd, dest, imm(v.value & mask(wd)))
        elif v.kind == "var" and vw is not None and vw < wd:
            self.emit("mov", wd, dest, imm(0))
            self.emit("mov", vw, dest, v)
        elif v != dest:
            self.emit("mov", wd, dest, v)

    # -- conditions ----------------------------------------------------------

    def jump_if(self, cond, target, when):
        """Jump to ``target`` if truth of ``cond`` equals ``when``."""
        c = fold(cond)
        if c is not None:
            if bool(c) == when:
                self.emit("goto", 0, label(target))
            return
        if isinstance(cond, A.Unary) and cond.op == "!":
            return self.jump_if(cond.operand, target, not when)
        if isinstance(cond, A.Binary) and cond.op in A.COMPARE and self.width(cond) is not None:
            op, left, right = cond.op, cond.left, cond.right
            if op in (">", "<="):
                left, right = right, left
                op = {">": "<", "<=": ">="}[op]
            # the flag we compute must be zero exactly when we jump
            plan = {
                ("==", False): ("eq", False), ("==", True): ("neq", False),
                ("!=", False): ("neq", False), ("!=", True): ("eq", False),
                (">=", False): ("gte", False), (">=", True): ("gte", True),
                ("<", True): ("gte", False), ("<", False): ("gte", True),
            }[(op, when)]
            w = self.width(cond)
            t = self.temp(w)
            self.compute(t, w, A.Binary({"eq": "==", "neq": "!=", "gte": ">="}[plan[0]],
                                        left, right, line=cond.line, col=cond.col))
            if plan[1]:
                self.emit("eq", w, t, imm(0))
            self.emit("if_zero_goto", w, t, label(target))
            return
        v, w = self.value(cond)
        if not when:
            self.emit("if_zero_goto", w, v, label(target))
            return
        t = self.temp(w)
        self.emit("mov", w, t, v)
        self.emit("eq", w, t, imm(0))
        self.emit("if_zero_goto", w, t, label(target))

    # -- statements ----------------------------------------------------------

    def stmts(self, body):
        for s in body:
            self.stmt(s)

    def stmt(self, s):
        self.reset_temps()
        m = getattr(self, "s_" + type(s).__name__, None)
        if m is None:
            raise self.error(f"unsupported statement {type(s).__name__}", s)
        m(s)

    def s_Assign(self, s):
        cell, p, w = self.location(s.target)
        e = s.value
        if cell is not None:
            if (isinstance(e, (A.Binary, A.Unary)) and fold(e) is None and e.op != "signed"
                    and self.width(e) == w and self.direct_ok(e, s.target)):
                self.compute(cell, w, e)
            elif not self.load_direct(cell, w, e):
                v, vw = self.value(e)
                self.mov_into(cell, w, v, vw)
            return
        v, vw = self.value(e)
        if v.kind == "imm":
            v = imm(v.value & mask(w))
        elif v.kind == "var":
            v = self.widen(v, vw, w)
        self.emit("store", w, p, v)

    def load_direct(self, cell, w, e):
        """Load a memory operand straight into ``cell``; False if not applicable."""
        if isinstance(e, A.Index) and self.const_index(e) is None:
            lw = self.sym_width(e.sym)
            p = self.element_pointer(e.sym, e.index)
        elif isinstance(e, A.Mem):
            lw = kind_width(e.kind, self.aw)
            p = self.pointer(e.addr)
        else:
            return False
        if lw == w:
            self.emit("load", w, cell, p)
        elif lw < w and p != cell:
            self.emit("mov", w, cell, imm(0))
            self.emit("load", lw, cell, p)
        else:
            t, tw = self.load(p, lw)
            self.mov_into(cell, w, t, tw)
        return True

    def direct_ok(self, e, target):
        """Can ``e`` be evaluated with ``target`` itself as the accumulator?"""
        if isinstance(e, A.Binary) and fold(e) is None:
            left, right = (e.right, e.left) if e.op in (">", "<=") else (e.left, e.right)
            if isinstance(left, A.Unary) and left.op == "signed":
                left = left.operand
            return not self.mentions(right, target) and self.direct_ok(left, target)
        if isinstance(e, A.Unary) and fold(e) is None:
            if e.op == "-":
                return not self.mentions(e.operand, target)
            return self.direct_ok(e.operand, target)
        return True

    def mentions(self, e, target):
        """Conservative: can evaluating ``e`` read the cell of ``target``?"""
        if isinstance(target, A.Index):
            sym = target.sym
        else:
            sym = target.sym
        found = False

        def walk(x):
            nonlocal found
            if isinstance(x, A.Mem):
                found = True
            elif isinstance(x, (A.Name, A.Index)) and x.sym is sym:
                found = True
            for v in vars(x).values():
                if isinstance(v, A.Expr):
                    walk(v)

        walk(e)
        return found

    def s_Local(self, s):
        if s.value is not None:
            self.s_Assign(A.Assign(A.Name(s.sym.name, s.sym), s.value, line=s.line, col=s.col))

    def s_If(self, s):
        end = self.new_label("endif")
        if s.orelse:
            other = self.new_label("else")
            self.jump_if(s.cond, other, False)
            self.stmts(s.then)
            self.emit("goto", 0, label(end))
            self.place(other)
            self.stmts(s.orelse)
        else:
            self.jump_if(s.cond, end, False)
            self.stmts(s.then)
        self.place(end)

    def bound(self, s, derived=None):
        if s.maxiter is not None:
            return s.maxiter
        if derived is not None:
            return derived
        return self.maxiter_default

    def loop(self, s, kind, cond, body, step=None, derived=None, guard=True):
        head = self.new_label(kind + "_head")
        cont = self.new_label(kind + "_cont")
        exit_ = self.new_label(kind + "_exit")
        if guard:
            self.reset_temps()
            self.jump_if(cond, exit_, False)
        self.place(head)
        n = self.bound(s, derived)
        if n is not None:
            self.bounds[head] = n
        self.loops.append((cont, exit_))
        self.stmts(body)
        self.loops.pop()
        self.place(cont)
        if step is not None:
            self.stmt(step)
        self.reset_temps()
        if kind == "repeat":
            self.jump_if(cond, head, False)
        elif kind == "loop":
            self.emit("goto", 0, label(head))
        else:
            self.jump_if(cond, head, True)
        self.place(exit_)

    def s_While(self, s):
        self.loop(s, "while", s.cond, s.body)

    def s_Repeat(self, s):
        self.loop(s, "repeat", s.cond, s.body, guard=False)

    def s_Loop(self, s):
        self.loop(s, "loop", None, s.body, guard=False)

    def s_For(self, s):
        if s.init is not None:
            self.stmt(s.init)
        derived, static_true = self.for_count(s)
        self.loop(s, "for", s.cond, s.body, s.step, derived, guard=not static_true)

    def for_count(self, s):
        """Trip count of ``for (i = A; i < B; i = i + S)`` with constant A, B, S."""
        init, cond, step = s.init, s.cond, s.step
        if fold(cond):
            return None, True
        try:
            i = init.target
            assert isinstance(i, A.Name)
            a = fold(init.value)
            assert isinstance(cond, A.Binary) and cond.op in ("<", "<=", "!=")
            assert isinstance(cond.left, A.Name) and cond.left.sym is i.sym
            b = fold(cond.right)
            assert isinstance(step.target, A.Name) and step.target.sym is i.sym
            sv = step.value
            assert isinstance(sv, A.Binary) and sv.op == "+"
            assert isinstance(sv.left, A.Name) and sv.left.sym is i.sym
            st = fold(sv.right)
            assert None not in (a, b, st) and st > 0
        except (AssertionError, AttributeError):
            return None, False
        if self.assigns(s.body, i.sym):
            return None, False
        if cond.op == "<":
            n = max(0, -(-(b - a) // st))
        elif cond.op == "<=":
            n = max(0, (b - a) // st + 1)
        else:
            if (b - a) % st or b < a:
                return None, False
            n = (b - a) // st
        w = self.sym_width(i.sym)
        if b >= 1 << (8 * w):
            return None, False
        return max(n, 1), n > 0

    def assigns(self, body, sym):
        for s in body:
            if isinstance(s, A.Assign) and isinstance(s.target, A.Name) and s.target.sym is sym:
                return True
            if isinstance(s, A.Assign) and isinstance(s.target, A.Mem):
                return True
            if isinstance(s, A.Asm):
                return True
            # calls are recursion-free, so looking through the callee terminates
            if isinstance(s, A.Call) and self.assigns(self.ast.procs[s.name].body, sym):
                return True
            for v in vars(s).values():
                if isinstance(v, list) and self.assigns(v, sym):
                    return True
                if isinstance(v, A.Stmt) and self.assigns([v], sym):
                    return True
        return False

    def s_Break(self, s):
        self.emit("goto", 0, label(self.loops[-1][1]))

    def s_Continue(self, s):
        self.emit("goto", 0, label(self.loops[-1][0]))

    def s_Call(self, s):
        proc = self.ast.procs[s.name]
        for p, a in zip(proc.params, s.args):
            self.reset_temps()
            self.load_into(var(p.mangled), self.sym_width(p), a)
        self.inline(proc)

    def s_Asm(self, s):
        prog = parse_asm(s.text)
        for it in prog.items:
            if isinstance(it, VarDecl):
                self.decls.append(it)
            else:
                self.code.append(it)
        self.bounds.update(prog.loop_bounds)

    def inline(self, proc):
        saved = self.loops
        self.loops = []
        self.inlining.append(proc.name)
        self.stmts(proc.body)
        self.inlining.pop()
        self.loops = saved

    # -- program -------------------------------------------------------------

    def decl_of(self, sym):
        init = None
        if sym.init is not None:
            init = tuple(self.static_operand(v, sym) for v in sym.init)
        return VarDecl(sym.mangled, sym.kind, sym.count, init, None, sym.address)

    def static_operand(self, v, sym):
        if isinstance(v, int):
            return imm(v & mask(self.sym_width(sym)))
        if isinstance(v, A.Leak):
            return Operand(LEAK, v.name, v.offset)
        if isinstance(v, A.AddrOf):
            k = 0 if v.index is None else fold(v.index)
            return addr_of(v.sym.mangled, k * self.sym_width(v.sym))
        raise self.error("bad initializer", sym)

    def run(self):
        ast = self.ast
        for sym in ast.globals:
            self.decls.append(self.decl_of(sym))
        for proc in ast.procs.values():
            for sym in proc.symbols.values():
                self.decls.append(self.decl_of(sym))
        self.inline(ast.procs[ast.entry])
        temps = [VarDecl(f"%t{w * 8}_{k}", width_name(w), None, None)
                 for w in sorted(self.temp_max) for k in range(self.temp_max[w])]
        prog = AsmProgram(self.decls + temps + self.code, self.bounds)
        prog.validate()
        return prog


def compile_to_hl_asm(source, addr_width=4, maxiter_default=None):
    """Compile a script (source text or parsed AST) to an HL-DOP-asm program."""
    ast = parse_payload(source) if isinstance(source, str) else source
    return Compiler(ast, addr_width, maxiter_default).run()
