"""Tokens of the payload language."""

import re
from dataclasses import dataclass

from ..errors import SlangError

KEYWORDS = {
    "proc", "if", "else", "while", "for", "repeat", "until", "loop", "break", "continue",
    "asm", "at", "signed", "leak", "byte", "int16", "int32", "int64", "addr",
}
TYPES = ("byte", "int16", "int32", "int64", "addr")

_SPEC = [
    ("ws", r"[ \t\r]+"),
    ("nl", r"\n"),
    ("comment", r"//[^\n]*|/\*(?:.|\n)*?\*/"),
    ("hexstr", r'hex"[0-9A-Fa-f\s]*"'),
    ("string", r'"(?:[^"\\\n]|\\.)*"'),
    ("char", r"'(?:[^'\\\n]|\\.)'"),
    ("number", r"0[xX][0-9A-Fa-f]+|\d+"),
    ("ident", r"[A-Za-z_]\w*"),
    ("op", r"==|!=|>=|<=|[-+*&|<>=!(){}\[\];,@~]"),
]
_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _SPEC))
_ESC = {"n": "\n", "t": "\t", "r": "\r", "0": "\0", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str        # ident, keyword, number, string, bytes, op, asm, eof
    value: object
    line: int
    col: int

    def __str__(self):
        return str(self.value) if self.kind != "eof" else "end of input"


def _unescape(body, line, col):
    out, i = [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body):
                raise SlangError("dangling escape", line, col)
            e = body[i]
            if e == "x":
                out.append(chr(int(body[i + 1:i + 3], 16)))
                i += 3
                continue
            if e not in _ESC:
                raise SlangError(f"unknown escape \\{e}", line, col)
            out.append(_ESC[e])
        else:
            out.append(ch)
        i += 1
    return bytes(ord(c) & 0xFF for c in "".join(out))


def _raw_block(src, pos, line):
    """Text between a '{' at ``pos`` and its matching '}'."""
    depth = 0
    i = pos
    while i < len(src):
        if src[i] == "{":
            depth += 1
        elif src[i] == "}":
            depth -= 1
            if depth == 0:
                return src[pos + 1:i], i + 1
        i += 1
    raise SlangError("unterminated asm block", line, 1)


def tokenize(src):
    toks = []
    pos, line, line_start = 0, 1, 0
    n = len(src)
    while pos < n:
        m = _RE.match(src, pos)
        col = pos - line_start + 1
        if m is None:
            raise SlangError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            nls = text.count("\n")
            if nls:
                line += nls
                line_start = pos + text.rfind("\n") + 1
        elif kind == "ws":
            pass
        elif kind == "ident" and text == "asm":
            j = m.end()
            while j < n and src[j] in " \t\r\n":
                j += 1
            if j >= n or src[j] != "{":
                raise SlangError("expected '{' after asm", line, col)
            body, end = _raw_block(src, j, line)
            toks.append(Token("asm", body, line, col))
            line += src.count("\n", pos, end)
            nl = src.rfind("\n", pos, end)
            if nl >= 0:
                line_start = nl + 1
            pos = end
            continue
        elif kind == "ident":
            toks.append(Token("keyword" if text in KEYWORDS else "ident", text, line, col))
        elif kind == "number":
            toks.append(Token("number", int(text, 0), line, col))
        elif kind == "char":
            toks.append(Token("number", _unescape(text[1:-1], line, col)[0], line, col))
        elif kind == "string":
            toks.append(Token("bytes", _unescape(text[1:-1], line, col), line, col))
        elif kind == "hexstr":
            digits = "".join(text[4:-1].split())
            if len(digits) % 2:
                raise SlangError("hex string needs an even number of digits", line, col)
            toks.append(Token("bytes", bytes.fromhex(digits), line, col))
        else:
            toks.append(Token("op", text, line, col))
        pos = m.end()
    toks.append(Token("eof", None, line, pos - line_start + 1))
    return toks
