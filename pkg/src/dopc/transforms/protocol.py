"""Interactive protocols: how often to send which basic blocks.

A protocol is a nested sequence. Items are block ids or repetitions
``(count, item, ...)``. On disk it is one S-expression::

    (1 (3 2 3) 4)

which expands to 1 2 3 2 3 2 3 4. The reader also accepts ``BB`` prefixes
and commas, so ``(BB1,(3,BB2,BB3),BB4)`` parses to the same protocol.
"""

import math
import re
from dataclasses import dataclass

from ..errors import ProtocolError, TransformError
from .cfg import build_cfg, find_loops, rpo


@dataclass(frozen=True)
class Rep:
    count: int
    items: tuple


@dataclass(frozen=True)
class Protocol:
    items: tuple

    def expand(self):
        return expand_protocol(self)

    def __str__(self):
        return serialize_protocol(self)


def _expand(items, out):
    for it in items:
        if isinstance(it, Rep):
            for _ in range(it.count):
                _expand(it.items, out)
        else:
            out.append(it)


def expand_protocol(p):
    """Flatten into the block trace."""
    if isinstance(p, str):
        p = parse_protocol(p)
    out = []
    _expand(p.items, out)
    return out


def trace_length(p):
    def n(items):
        return sum(it.count * n(it.items) if isinstance(it, Rep) else 1 for it in items)
    return n(p.items)


def _ser(items):
    parts = []
    for it in items:
        if isinstance(it, Rep):
            parts.append("(" + " ".join([str(it.count)] + _ser(it.items)) + ")")
        else:
            parts.append(str(it))
    return parts


def serialize_protocol(p):
    return "(" + " ".join(_ser(p.items)) + ")"


_TOKEN_RE = re.compile(r"\s*(?:(\()|(\))|(BB|bb)?(\d+)|(,)|(\S))")


def _tokens(text):
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            break
        pos = m.end()
        if m.group(1):
            yield ("(", None)
        elif m.group(2):
            yield (")", None)
        elif m.group(4) is not None:
            yield ("bb" if m.group(3) else "int", int(m.group(4)))
        elif m.group(5):
            continue
        else:
            raise ProtocolError(f"unexpected character {m.group(6)!r} in protocol")


def parse_protocol(text):
    toks = list(_tokens(text))
    if not toks or toks[0][0] != "(":
        raise ProtocolError("a protocol is one parenthesised list")
    pos = 0

    def parse_list(top):
        nonlocal pos
        pos += 1            # "("
        items = []
        count = None
        first = True
        while True:
            if pos >= len(toks):
                raise ProtocolError("unbalanced '(' in protocol")
            kind, val = toks[pos]
            if kind == ")":
                pos += 1
                break
            if kind == "(":
                items.append(parse_list(False))
            elif not top and first:
                if kind != "int":
                    raise ProtocolError("a repetition must start with a plain count")
                count = val
                pos += 1
            else:
                items.append(val)
                pos += 1
            first = False
        if top:
            return tuple(items)
        if count is None:
            raise ProtocolError("empty repetition")
        return Rep(count, tuple(items))

    items = parse_list(True)
    if pos != len(toks):
        raise ProtocolError("trailing tokens after protocol")
    return Protocol(items)


def generate_protocol(prog, bounds=None, cfg=None):
    """Structured dissection of a reducible program into a protocol.

    Blocks of a region appear once each in reverse postorder, so both arms
    of every selection are present; loops become repetitions with their
    bound. ``bounds`` maps a loop header label to its maximum iterations
    and defaults to ``prog.loop_bounds``.
    """
    cfg = cfg or build_cfg(prog)
    bounds = prog.loop_bounds if bounds is None else bounds
    loops, _ = find_loops(cfg)
    pos = {b: i for i, b in enumerate(rpo(cfg))}
    innermost = {}
    for lp in sorted(loops.values(), key=lambda lp: -len(lp.nodes)):
        for n in lp.nodes:
            innermost[n] = lp

    def bound(lp):
        # loops sharing a header merge into one; their bounds multiply
        labels = cfg.blocks[lp.header].labels
        found = [bounds[lab] for lab in labels if lab in bounds]
        if found:
            return math.prod(found)
        where = f" (:{labels[0]})" if labels else ""
        raise TransformError(f"loop at block {lp.header}{where} has no iteration bound")

    def child_of(b, owner):
        lp = innermost.get(b)
        while lp is not None and lp is not owner and lp.parent is not owner:
            lp = lp.parent
        return None if lp is None or lp is owner else lp

    def seq(nodes, owner):
        items, done = [], set()
        for b in sorted(nodes, key=pos.__getitem__):
            if b in done:
                continue
            lp = child_of(b, owner)
            if lp is not None:
                items.append(Rep(bound(lp), tuple(seq(lp.nodes, lp))))
                done |= lp.nodes
            else:
                items.append(b)
                done.add(b)
        return items

    return Protocol(tuple(seq(set(pos), None)))
