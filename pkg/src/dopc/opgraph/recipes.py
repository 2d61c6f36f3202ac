"""Recipe files: one DOP-op expressed as a body of other DOP-ops.

Format::

    @category reusable          # sticky until the next @category
    @weight 12                  # applies to the next recipe only
    add32 dst src               # head: mnemonic and formals (labels as :name)
        int32 %cpy
        mov32 %cpy src
        ...
"""

from dataclasses import dataclass, field

from ..asm.ir import ADDR, ANCHOR, CREF, LABEL, REC, VAR, AsmProgram, Instruction, VarDecl, cref
from ..asm.parser import parse_asm, split_mnemonic
from ..errors import AsmError

CATEGORIES = ("reusable", "app", "gadget")


@dataclass(frozen=True)
class Recipe:
    opcode: str
    width: int
    formals: tuple
    body: AsmProgram = field(compare=False, hash=False)
    weight: int = None
    category: str = "reusable"
    rid: str = None
    source: str = field(default=None, compare=False)

    @property
    def signature(self):
        return (self.opcode, self.width)

    @property
    def mnemonic(self):
        return self.opcode if self.opcode == "goto" else f"{self.opcode}{self.width * 8}"

    def uses(self):
        """Signatures of the operations the body relies on."""
        return frozenset(i.signature for i in self.body.instructions)

    def anchors(self):
        out = set()
        for i in self.body.instructions:
            for o in i.operands:
                if o.kind == ANCHOR:
                    out.add(o.name)
                elif o.kind == REC:
                    out.add("rec()")
        return out

    def body_text(self):
        return str(self.body)


_KIND_BY_BYTES = {1: "byte", 2: "int16", 4: "int32", 8: "int64"}


def _subst(text, bits):
    if bits is None:
        return text
    return (text.replace("{W}", str(bits)).replace("{B}", str(bits // 8))
            .replace("{T}", _KIND_BY_BYTES[bits // 8]).replace("{M}", str((1 << bits) - 1)))


def parse_recipes(source, origin=None):
    """Parse recipe text.

    ``@widths 8 32`` before a head instantiates the recipe once per width,
    substituting ``{W}`` (bits), ``{B}`` (bytes), ``{T}`` (type name) and
    ``{M}`` (all-ones mask) in head and body.
    """
    recipes = []
    category = "reusable"
    weight = rid = widths = None
    head = None
    body_lines = []
    counts = {}

    def flush():
        nonlocal head, body_lines, weight, rid, widths
        if head is None:
            return
        text, lineno = head
        for bits in widths or [None]:
            words = _subst(text, bits).split()
            opcode, width = split_mnemonic(words[0], lineno)
            formals = tuple(words[1:])
            body = parse_asm("\n".join(_subst(b, bits) for b in body_lines))
            _check_body(words[0], opcode, width, formals, body, lineno)
            k = counts.get((opcode, width), 0)
            counts[(opcode, width)] = k + 1
            name = _subst(rid, bits) if rid else f"{words[0]}#{k}"
            recipes.append(Recipe(opcode, width, formals, body, weight, category, name, origin))
        head, body_lines, weight, rid, widths = None, [], None, None, None

    for lineno, raw in enumerate(source.splitlines(), 1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            body_lines.append("")
            continue
        if raw[0] in " \t":
            if head is None:
                raise AsmError("recipe body without a head", lineno)
            body_lines.append(stripped)
            continue
        words = stripped.split()
        if head is not None:
            flush()
        if words[0] == "@category":
            if len(words) != 2 or words[1] not in CATEGORIES:
                raise AsmError(f"bad @category {stripped!r}", lineno)
            category = words[1]
        elif words[0] == "@weight":
            weight = int(words[1], 0)
            if weight < 1:
                raise AsmError("@weight must be positive", lineno)
        elif words[0] == "@id":
            rid = words[1]
        elif words[0] == "@widths":
            widths = [int(w) for w in words[1:]]
            if not widths or any(w not in (8, 16, 32, 64) for w in widths):
                raise AsmError(f"bad @widths {stripped!r}", lineno)
        else:
            head = (stripped, lineno)
            body_lines = [""] * lineno
    flush()
    seen = set()
    for r in recipes:
        if r.rid in seen:
            raise AsmError(f"duplicate recipe id {r.rid}")
        seen.add(r.rid)
    return recipes


def _check_body(mnemonic, opcode, width, formals, body, lineno):
    names = {f.lstrip(":") for f in formals}
    if len(names) != len(formals):
        raise AsmError(f"duplicate formal in {mnemonic}", lineno)
    declared = {d.name for d in body.decls}
    labels = set(body.labels)
    for ins in body.instructions:
        if ins.signature == (opcode, width):
            raise AsmError(f"recipe {mnemonic} references its own head", ins.line)
        for o in ins.operands:
            while o.kind == CREF:
                o = o.inner
            if o.kind in (VAR, ADDR) and o.name not in names and o.name not in declared:
                raise AsmError(f"{mnemonic}: unknown name {o.name!r}", ins.line)
            if o.kind in (LABEL, REC) and o.name not in labels and o.name not in names:
                raise AsmError(f"{mnemonic}: unknown label :{o.name}", ins.line)


def load_recipe_files(paths):
    """Concatenate recipe files in order."""
    out = []
    for p in paths:
        with open(p) as fh:
            out.extend(parse_recipes(fh.read(), str(p)))
    return out


def instantiate(recipe, actuals, invocation_id, once_seen):
    """Bind formals to ``actuals`` and expand macros in the body."""
    from ..asm.macros import expand_macros
    from dataclasses import replace

    if len(actuals) != len(recipe.formals):
        raise AsmError(f"{recipe.mnemonic} expects {len(recipe.formals)} operands")
    bind = {f.lstrip(":"): a for f, a in zip(recipe.formals, actuals)}
    # rename the body's own %-names first so actuals that happen to carry a
    # %-prefix (compiler temporaries) are left alone
    body = expand_macros(recipe.body, invocation_id, once_seen, once_scope=recipe.mnemonic)
    items = []
    for it in body.items:
        if isinstance(it, Instruction):
            ops = tuple(_bind(o, bind, recipe) for o in it.operands)
            it = replace(it, operands=ops)
        elif isinstance(it, VarDecl) and it.init:
            it = replace(it, init=tuple(_bind(o, bind, recipe) for o in it.init))
        items.append(it)
    return AsmProgram(items, dict(body.loop_bounds))


def _bind(o, bind, recipe):
    if o.kind == CREF:
        return cref(_bind(o.inner, bind, recipe))
    if o.name not in bind:
        return o
    a = bind[o.name]
    if o.kind == VAR:
        if o.value == 0:
            return a
        return a.shifted(o.value)
    if o.kind == ADDR:
        if a.kind == VAR:
            return a.__class__(ADDR, a.name, a.value + o.value)
        if o.value == 0 and a.kind != ANCHOR:
            # the actual is a value, not a cell: point at a constant cell
            return cref(a)
        raise AsmError(f"{recipe.mnemonic}: cannot take address of {a}")
    if o.kind == LABEL:
        if a.kind != LABEL:
            raise AsmError(f"{recipe.mnemonic}: label formal bound to {a}")
        return a
    if o.kind == REC:
        return o.__class__(REC, a.name, o.value)
    return o
