"""Line-oriented reader and writer for ``.hlasm`` / ``.llasm`` / recipe bodies."""

import re

from ..errors import AsmError
from ..types import TYPE_NAMES
from .ir import (
    ADDR, ANCHOR, CREF, DIRECTIVES, EXPR, IMM, LABEL, LEAK, REC, SIGNATURES, UNSIZED, VAR,
    AsmProgram, Directive, Instruction, LabelDef, Operand, VarDecl,
)

NAME = r"[%A-Za-z_][%\w.]*"
_NAME_RE = re.compile(NAME + r"$")
_MNEMONIC_RE = re.compile(r"([a-z_]+?)(8|16|32|64)$")
_OFFSET_RE = re.compile(r"(" + NAME + r")([+-](?:0x[0-9a-fA-F]+|\d+))?$")
_REC_RE = re.compile(r"rec\(\s*:(" + NAME + r")\s*,\s*(\d+)\s*\)$")
_LEAK_RE = re.compile(r"leak\(\s*(" + NAME + r")\s*\)([+-](?:0x[0-9a-fA-F]+|\d+))?$")
_INT_RE = re.compile(r"-?(0x[0-9a-fA-F]+|\d+)$")


def tokenize(text, line=None):
    """Split on whitespace and commas, keeping parenthesised groups whole."""
    toks, cur, depth = [], [], 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise AsmError("unbalanced ')'", line)
        if depth == 0 and (ch.isspace() or ch == ","):
            if cur:
                toks.append("".join(cur))
                cur = []
            continue
        cur.append(ch)
    if depth:
        raise AsmError("unbalanced '('", line)
    if cur:
        toks.append("".join(cur))
    return toks


def parse_int(tok):
    return int(tok, 0)


def parse_operand(tok, line=None):
    if tok.startswith("$(") and tok.endswith(")"):
        return Operand(EXPR, tok[2:-1].strip())
    if tok.startswith("&(") and tok.endswith(")"):
        return Operand(CREF, None, 0, parse_operand(tok[2:-1].strip(), line))
    if _INT_RE.match(tok):
        return Operand(IMM, None, parse_int(tok))
    if tok.startswith(":"):
        name = tok[1:]
        if not _NAME_RE.match(name):
            raise AsmError(f"malformed label {tok!r}", line)
        return Operand(LABEL, name)
    m = _REC_RE.match(tok)
    if m:
        return Operand(REC, m.group(1), int(m.group(2)))
    m = _LEAK_RE.match(tok)
    if m:
        return Operand(LEAK, m.group(1), parse_int(m.group(2) or "0"))
    kind = VAR
    body = tok
    if tok[0] == "@":
        kind, body = ANCHOR, tok[1:]
    elif tok[0] == "&":
        kind, body = ADDR, tok[1:]
    m = _OFFSET_RE.match(body)
    if not m:
        raise AsmError(f"malformed operand {tok!r}", line)
    return Operand(kind, m.group(1), parse_int(m.group(2) or "0"))


def split_mnemonic(word, line=None):
    if word in UNSIZED:
        return word, 0
    m = _MNEMONIC_RE.match(word)
    if not m or m.group(1) not in SIGNATURES:
        if word in SIGNATURES:
            raise AsmError(f"opcode {word!r} needs a width suffix", line)
        raise AsmError(f"unknown opcode {word!r}", line)
    return m.group(1), int(m.group(2)) // 8


def check_operands(opcode, operands, line=None):
    sig = SIGNATURES[opcode]
    if len(operands) != len(sig):
        raise AsmError(f"{opcode} takes {len(sig)} operands, got {len(operands)}", line)
    for op, role in zip(operands, sig):
        if role == "L" and op.kind != LABEL:
            raise AsmError(f"{opcode}: expected label, got {op}", line)
        if role == "D" and op.kind not in (VAR, ANCHOR, REC):
            raise AsmError(f"{opcode}: destination must be a cell, got {op}", line)
        if role in "SC" and op.kind == LABEL and opcode in ("goto",):
            raise AsmError(f"{opcode}: bad operand {op}", line)


def parse_instruction(words, line=None):
    opcode, width = split_mnemonic(words[0], line)
    operands = tuple(parse_operand(t, line) for t in words[1:])
    check_operands(opcode, operands, line)
    return Instruction(opcode, width, operands, line)


def parse_decl(words, line=None):
    once = False
    if words[0] == "%once":
        once, words = True, words[1:]
    kind = words[0]
    if len(words) < 2:
        raise AsmError("declaration without a name", line)
    m = re.match(r"(" + NAME + r")(?:\[(\d+)\])?$", words[1])
    if not m:
        raise AsmError(f"malformed declaration name {words[1]!r}", line)
    name, count = m.group(1), m.group(2)
    count = int(count) if count is not None else None
    align = address = init = None
    rest = words[2:]
    while rest:
        w = rest.pop(0)
        if w == "align":
            align = parse_int(rest.pop(0))
        elif w == "at":
            address = parse_int(rest.pop(0))
        elif w == "=":
            init = tuple(parse_operand(t, line) for t in rest)
            if not init:
                raise AsmError("empty initializer", line)
            rest = []
        else:
            raise AsmError(f"unexpected {w!r} in declaration", line)
    return VarDecl(name, kind, count, init, align, address, once, line)


def parse_asm(source):
    """Parse DOP-Asm text; macros are left unexpanded."""
    prog = AsmProgram()
    for lineno, raw in enumerate(source.splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith(":"):
            op = parse_operand(text.split()[0], lineno)
            if op.kind != LABEL or len(text.split()) != 1:
                raise AsmError(f"malformed label {text!r}", lineno)
            prog.items.append(LabelDef(op.name, lineno))
            continue
        if text.startswith("."):
            words = text[1:].split()
            if words[0] not in DIRECTIVES or len(words) != 2:
                raise AsmError(f"unknown directive {text!r}", lineno)
            prog.items.append(Directive(words[0], parse_int(words[1]), lineno))
            continue
        if text.startswith("@maxiter"):
            words = text.split()
            if len(words) != 3 or not words[1].startswith(":"):
                raise AsmError("expected '@maxiter :label N'", lineno)
            prog.loop_bounds[words[1][1:]] = parse_int(words[2])
            continue
        words = tokenize(text, lineno)
        if words[0] in TYPE_NAMES or words[0] == "%once":
            prog.items.append(parse_decl(words, lineno))
        else:
            prog.items.append(parse_instruction(words, lineno))
    return prog


def format_asm(prog):
    out = []
    for it in prog.items:
        if isinstance(it, LabelDef):
            out.append(str(it))
        else:
            out.append("    " + str(it))
    for name, n in sorted(prog.loop_bounds.items()):
        out.append(f"@maxiter :{name} {n}")
    return "\n".join(out) + ("\n" if out else "")
