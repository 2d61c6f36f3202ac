"""Macro expansion: unique renaming, ``%once`` sharing, compile-time arithmetic."""

import ast
import operator
from dataclasses import replace

from ..errors import MacroError
from .ir import ADDR, CREF, EXPR, IMM, LABEL, REC, VAR, AsmProgram, Instruction, LabelDef, Operand, VarDecl

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.FloorDiv: operator.floordiv,
    ast.Div: operator.floordiv,
    ast.Mod: operator.mod,
    ast.LShift: operator.lshift,
    ast.RShift: operator.rshift,
    ast.BitAnd: operator.and_,
    ast.BitOr: operator.or_,
    ast.BitXor: operator.xor,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos, ast.Invert: operator.invert}


def compile_element_fn(text):
    """Check ``text`` once with the safe evaluator, then evaluate per index."""
    eval_compile_time(text, {"i": 0})
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Div):
            node.op = ast.FloorDiv()
    code = compile(tree, "<init>", "eval")

    def fn(i):
        try:
            return eval(code, {"__builtins__": {}}, {"i": i})
        except ZeroDivisionError as e:
            raise MacroError(f"division by zero in $({text})") from e

    return fn


def eval_compile_time(text, env=None):
    """Evaluate an integer expression such as ``4*8`` or ``(i - 1) % 256``."""
    env = env or {}
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise MacroError(f"bad compile-time expression $({text})") from e

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, (ast.FloorDiv, ast.Div, ast.Mod)) and right == 0:
                raise MacroError(f"division by zero in $({text})")
            return _BINOPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise MacroError(f"unresolved macro name {node.id!r} in $({text})")
            return env[node.id]
        raise MacroError(f"unsupported construct in $({text})")

    return ev(tree)


def _rename(name, invocation_id, once_names):
    if name is None or not name.startswith("%"):
        return name
    if name in once_names:
        return once_names[name]
    return f"{name[1:]}__{invocation_id}"


def _expand_operand(op, invocation_id, once_names):
    if op.kind == EXPR:
        return Operand(IMM, None, eval_compile_time(op.name))
    if op.kind == CREF:
        return replace(op, inner=_expand_operand(op.inner, invocation_id, once_names))
    if op.kind in (VAR, ADDR, LABEL, REC):
        return replace(op, name=_rename(op.name, invocation_id, once_names))
    return op


def expand_macros(prog, invocation_id, once_seen=None, once_scope="once"):
    """Rewrite ``%name`` to ``name__<invocation_id>`` and evaluate ``$(...)``.

    ``%once`` declarations get a name shared by every instantiation and are
    emitted only when ``once_seen`` (a set the caller keeps across calls) does
    not already hold them.
    """
    if once_seen is None:
        once_seen = set()
    once_names = {}
    for d in prog.decls:
        if d.once:
            once_names[d.name] = f"{d.name.lstrip('%')}__{once_scope}"

    out = []
    for it in prog.items:
        if isinstance(it, Instruction):
            ops = tuple(_expand_operand(o, invocation_id, once_names) for o in it.operands)
            out.append(replace(it, operands=ops))
        elif isinstance(it, LabelDef):
            out.append(replace(it, name=_rename(it.name, invocation_id, once_names)))
        elif isinstance(it, VarDecl):
            name = _rename(it.name, invocation_id, once_names)
            if it.once:
                if name in once_seen:
                    continue
                once_seen.add(name)
            out.append(replace(it, name=name, once=False, init=_expand_init(it, invocation_id, once_names)))
        else:
            out.append(it)
    bounds = {_rename(k, invocation_id, once_names): v for k, v in prog.loop_bounds.items()}
    return AsmProgram(out, bounds)


def _expand_init(decl, invocation_id, once_names):
    if decl.init is None:
        return None
    init = decl.init
    if decl.count and len(init) == 1 and init[0].kind == EXPR and decl.count > 1:
        fn = compile_element_fn(init[0].name)
        return tuple(Operand(IMM, None, fn(i)) for i in range(decl.count))
    return tuple(_expand_operand(o, invocation_id, once_names) for o in init)


def is_expanded(prog):
    for it in prog.items:
        ops = ()
        if isinstance(it, Instruction):
            ops = it.operands
        elif isinstance(it, VarDecl):
            ops = it.init or ()
        if any(o.kind == EXPR for o in ops):
            return False
    return True
