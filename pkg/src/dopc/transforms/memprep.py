"""Memory preparation: move variables into the target's scratch region.

Targets whose payload cannot carry a data segment get every variable
placed at a fixed scratch address, and a prologue of gadget writes puts the
initial values there before the program runs.
"""

from ..asm.ir import AsmProgram, Instruction, VarDecl, var
from ..errors import TransformError


def _prologue(decls, aw):
    out = []
    for d in decls:
        if d.init is None:
            continue
        w = d.elem_width(aw)
        for i, v in enumerate(d.init):
            out.append(Instruction("mov", w, (var(d.name, i * w), v)))
    return out


def assign_scratch(decls, target, start=None):
    """Addresses for every unplaced declaration, with guard gaps between them."""
    if target.scratch is None:
        raise TransformError(f"target {target.name} has no scratch region")
    base, size = target.scratch
    gap = target.scratch_gap
    aw = target.addr_width
    cur = base if start is None else start
    placed = []
    for d in decls:
        if d.address is not None:
            placed.append(d)
            continue
        w = d.elem_width(aw)
        align = max(d.align or 1, min(w, aw))
        cur += gap
        cur = (cur + align - 1) // align * align
        end = cur + d.size(aw)
        if end > base + size:
            raise TransformError(
                f"scratch region of {target.name} too small ({end - base} > {size} bytes)")
        placed.append(VarDecl(d.name, d.kind, d.count, None, d.align, cur, d.once, d.line))
        cur = end
    return placed, cur


def memory_preparation(prog, target, graph=None):
    """Return ``prog`` with scratch-placed variables and an init prologue.

    With ``graph`` the prologue is lowered onto the target's gadgets;
    otherwise it stays as ``mov`` instructions.
    """
    aw = target.addr_width
    decls = prog.decls
    if not decls:
        return prog.copy()
    pro = _prologue(decls, aw)
    extra = []
    if pro and graph is not None:
        from ..opgraph.lower import lower

        if not graph.synthesizable(("mov", 4)):
            raise TransformError(f"target {target.name} cannot store constants")
        known = {d.name for d in decls}
        low = lower(AsmProgram(list(decls) + pro, {}), graph, validate=False,
                    first_id=1_000_000, known=known)
        extra = [d for d in low.decls if d.name not in known]
        if any(d.init is not None for d in extra):
            raise TransformError("prologue lowering needs initialized helper cells")
        pro = [it for it in low.items if not isinstance(it, VarDecl)]
    placed, _ = assign_scratch(list(decls) + extra, target)
    body = [it for it in prog.items if not isinstance(it, VarDecl)]
    out = AsmProgram(placed + pro + body, dict(prog.loop_bounds))
    out.validate()
    for k, v in vars(prog).items():
        if k not in ("items", "loop_bounds"):
            setattr(out, k, v)
    out.prologue_length = len(pro)
    return out
