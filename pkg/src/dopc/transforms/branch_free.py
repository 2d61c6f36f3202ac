"""Branch-free transformation for targets without a usable program counter.

Every basic block becomes straight-line code guarded by ``state == id``.
Writes go to a scratch cell first and are committed to their destination
only when the block is active; jumps become guarded assignments to the
state cell. Blocks can then be executed in any order that contains the
real execution path, and an inactive block changes no user cell.

Three guards are available:

``cond``   conditional move with ``state - id`` as condition (zero = active)
``mul``    ``d = here * new + (1 - here) * d``
``index``  two-entry table ``{d, new}`` indexed by ``here``
"""

from ..asm.ir import (
    SIGNATURES, AsmProgram, Directive, Instruction, LabelDef, VarDecl, addr_of, imm, label, var,
)
from ..errors import TransformError
from ..types import width_name
from .cfg import EXIT, build_cfg

STRATEGIES = ("cond", "mul", "index")
PREFIX = "%bf."
STATE = PREFIX + "state"
SINK = PREFIX + "sink"


def block_label(bid):
    return f"{PREFIX}bb{bid}"


def choose_strategy(available=None):
    """Cheapest guard the op set supports: conditional move, multiply, table."""
    if available is None:
        return "cond"
    if ("cond_mov", 4) in available:
        return "cond"
    if ("mul", 4) in available and ("eq", 4) in available:
        return "mul"
    if ("load", 4) in available and ("eq", 4) in available:
        return "index"
    raise TransformError("no effect-guarding strategy: need cond_mov, mul+eq or load+eq")


class _Emitter:
    def __init__(self, strategy, aw):
        self.strategy = strategy
        self.aw = aw
        self.out = []
        self.decls = {}
        self.flags = {}        # width -> cell holding the guard flag for this block

    def cell(self, name, width, count=None, init=None):
        full = PREFIX + name
        if full not in self.decls:
            kind = "addr" if width == self.aw and name.startswith("pa") else width_name(width)
            self.decls[full] = VarDecl(full, kind, count, init)
        return var(full)

    def ins(self, opcode, width, *ops):
        self.out.append(Instruction(opcode, width, tuple(ops)))

    # -- guard flags -------------------------------------------------------

    def begin_block(self, bid, widths):
        self.flags = {}
        if self.strategy == "cond":
            nh = self.cell("nh32", 4)
            self.ins("mov", 4, nh, var(STATE))
            self.ins("sub", 4, nh, imm(bid))
            self.flags[4] = nh
            others = sorted(w for w in widths if w != 4)
            if others:
                nz = self.cell("nz32", 4)
                self.ins("mov", 4, nz, nh)
                self.ins("neq", 4, nz, imm(0))
                for w in others:
                    self.flags[w] = self._widen(nz, w, "nh")
        else:
            here = self.cell("here32", 4)
            self.ins("mov", 4, here, var(STATE))
            self.ins("eq", 4, here, imm(bid))
            self.flags[4] = here
            for w in sorted(w for w in widths if w != 4):
                self.flags[w] = self._widen(here, w, "here")

    def _widen(self, flag32, w, stem):
        """Copy a 0/1 flag into a ``w``-byte cell."""
        c = self.cell(f"{stem}{w * 8}", w)
        if w > 4:
            self.ins("mov", w, c, imm(0))
            self.ins("mov", 4, c, flag32)
        else:
            self.ins("mov", w, c, flag32)
        return c

    # -- selects -----------------------------------------------------------

    def guarded_assign(self, dst, src, w):
        """``dst = src`` if the block is active, else leave ``dst`` alone."""
        self.select(dst, src, w, self.flags[w], active_when_zero=self.strategy == "cond")

    def select(self, dst, src, w, flag, active_when_zero):
        if self.strategy == "cond":
            if not active_when_zero:
                raise TransformError("conditional move needs a zero-when-active flag")
            self.ins("cond_mov", w, flag, dst, src)
        elif self.strategy == "mul":
            g = self.cell(f"sel{w * 8}", w)
            inv = self.cell(f"inv{w * 8}", w)
            t = self.cell(f"old{w * 8}", w)
            self.ins("mov", w, g, src)
            self.ins("mul", w, g, flag)
            self.ins("mov", w, inv, imm(1))
            self.ins("sub", w, inv, flag)
            self.ins("mov", w, t, dst)
            self.ins("mul", w, t, inv)
            self.ins("add", w, g, t)
            self.ins("mov", w, dst, g)
        else:
            tab = self.cell(f"tab{w * 8}", w, count=2)
            ip = self._ptr_cell("pidx")
            self.ins("mov", w, tab, dst)
            self.ins("mov", w, var(tab.name, w), src)
            self.ins("mov", self.aw, ip, addr_of(tab.name))
            flag_aw = flag if w == self.aw else self._flag_at(flag, w)
            for _ in range(w):
                self.ins("add", self.aw, ip, flag_aw)
            self.ins("load", w, dst, ip)

    def _ptr_cell(self, name):
        full = PREFIX + name
        if full not in self.decls:
            self.decls[full] = VarDecl(full, "addr")
        return var(full)

    def _flag_at(self, flag, w):
        """The 0/1 flag widened (or narrowed) to the address width."""
        c = self.cell(f"flagaw{self.aw * 8}", self.aw)
        self.ins("mov", self.aw, c, imm(0))
        self.ins("mov", min(w, self.aw), c, flag)
        return c

    def guarded_pointer(self, src):
        """Cell holding ``*src`` when active, else the address of the sink."""
        pa = self._ptr_cell("pa")
        self.ins("mov", self.aw, pa, addr_of(SINK, 8))
        self.guarded_assign_aw(pa, src)
        return pa

    def guarded_assign_aw(self, dst, src):
        w = self.aw
        if w not in self.flags:
            self.flags[w] = self._widen(self.flags[4], w, "nh" if self.strategy == "cond" else "here")
        self.guarded_assign(dst, src, w)


_DEST_OPS = {op for op, sig in SIGNATURES.items() if "D" in sig}


def _widths(block, aw):
    ws = {4}
    for it in block.body:
        if isinstance(it, Instruction):
            ws.add(it.width or 4)
            if it.opcode in ("store", "load", "cond_load", "add_ind"):
                ws.add(aw)
    if block.jump is not None and block.jump.opcode == "if_zero_goto":
        ws.add(block.jump.width)
    return ws


def _rewrite(em, it):
    op, w = it.opcode, it.width
    sig = SIGNATURES.get(op)
    if sig is None:
        raise TransformError(f"{op}: no effect-guarded rewrite available")
    ops = list(it.operands)
    if op == "mov":
        em.guarded_assign(ops[0], ops[1], w)
        return
    if op == "store":
        pa = em.guarded_pointer(ops[0])
        em.ins("store", w, pa, ops[1])
        return
    if op == "add_ind":
        pa = em.guarded_pointer(ops[0])
        em.ins("add_ind", w, pa, ops[1])
        return
    if op not in _DEST_OPS:
        raise TransformError(f"{it.mnemonic}: no effect-guarded rewrite available")
    d = sig.index("D")
    g = em.cell(f"g{w * 8}", w)
    if op in ("load", "cond_load"):
        ops[-1] = em.guarded_pointer(ops[-1])
    if op != "load":
        em.ins("mov", w, g, ops[d])
    ops_g = list(ops)
    ops_g[d] = g
    em.ins(op, w, *ops_g)
    em.guarded_assign(ops[d], g, w)


def _transfer(em, block, cfg):
    """Guarded update of the state cell at the end of a block."""
    j = block.jump
    nxt = em.cell("next32", 4)
    if j is None:
        em.guarded_assign(var(STATE), imm(block.fallthrough or EXIT), 4)
        return
    target = cfg.label_block[j.operands[-1].name]
    if j.opcode == "goto":
        em.guarded_assign(var(STATE), imm(target), 4)
        return
    # if_zero_goto c :L  falls through to F otherwise
    c, wc = j.operands[0], j.width
    fall = block.fallthrough if block.fallthrough is not None else EXIT
    em.ins("mov", 4, nxt, imm(fall))
    if em.strategy == "cond":
        if wc == 4:
            cz = c
        elif wc < 4:
            cz = em.cell("cz32", 4)
            em.ins("mov", 4, cz, imm(0))
            em.ins("mov", wc, cz, c)
        else:
            t = em.cell(f"cz{wc * 8}", wc)
            em.ins("mov", wc, t, c)
            em.ins("neq", wc, t, imm(0))
            cz = em.cell("cz32", 4)
            em.ins("mov", 4, cz, imm(0))
            em.ins("mov", 1, cz, t)
        em.select(nxt, imm(target), 4, cz, active_when_zero=True)
    else:
        f = em.cell(f"iz{wc * 8}", wc)
        em.ins("mov", wc, f, c)
        em.ins("eq", wc, f, imm(0))
        if wc != 4:
            f32 = em.cell("iz32", 4)
            em.ins("mov", 4, f32, imm(0))
            em.ins("mov", 1, f32, f)
            f = f32
        em.select(nxt, imm(target), 4, f, active_when_zero=False)
    em.guarded_assign(var(STATE), nxt, 4)


def branch_free_transform(prog, strategy="auto", available=None, addr_width=4):
    """Return an equivalent program without jumps, one guarded section per block.

    Sections are introduced by ``%bf.bb<id>`` labels; block ids are dense
    from 1. The state cell starts at 1 and ends at 0.
    """
    if strategy == "auto":
        strategy = choose_strategy(available)
    if strategy not in STRATEGIES:
        raise TransformError(f"unknown strategy {strategy!r}")
    for d in prog.decls:
        if d.name.startswith(PREFIX):
            raise TransformError(f"{d.name} uses the reserved {PREFIX} prefix")
    cfg = build_cfg(prog)
    em = _Emitter(strategy, addr_width)
    em.decls[STATE] = VarDecl(STATE, "int32", None, (imm(1),))
    em.decls[SINK] = VarDecl(SINK, "int64", 3)
    for bid in cfg.ids():
        b = cfg.blocks[bid]
        em.out.append(LabelDef(block_label(bid)))
        em.begin_block(bid, _widths(b, addr_width))
        for it in b.body:
            if isinstance(it, Directive):
                em.out.append(it)
            else:
                _rewrite(em, it)
        _transfer(em, b, cfg)
    items = list(prog.decls) + list(em.decls.values()) + em.out
    out = AsmProgram(items, {})
    out.block_count = len(cfg.blocks)
    out.strategy = strategy
    return out


def sections(prog):
    """Instructions of each guarded section, keyed by block id."""
    from ..gadgets import BLOCK_LABEL_RE

    out, cur = {}, None
    for it in prog.items:
        if isinstance(it, LabelDef):
            m = BLOCK_LABEL_RE.search(it.name)
            if m and it.name.startswith(PREFIX):
                cur = int(m.group(1))
                out[cur] = []
                continue
        if cur is not None and isinstance(it, (Instruction, Directive)):
            out[cur].append(it)
    return out


def sequence_program(prog, order):
    """Straight-line program running the sections in ``order``."""
    sec = sections(prog)
    items = list(prog.decls)
    for bid in order:
        if bid not in sec:
            raise TransformError(f"no block {bid}")
        items.extend(sec[bid])
    return AsmProgram(items, {})


def protocol_program(prog, protocol):
    """Run the sections as ``protocol`` prescribes, with counted loops.

    Each repetition gets its own down-counter and one conditional jump, so
    the program grows with the protocol text rather than with the trace.
    """
    from .protocol import Rep

    sec = sections(prog)
    decls, body = [], []

    def emit(items):
        for it in items:
            if not isinstance(it, Rep):
                if it not in sec:
                    raise TransformError(f"no block {it}")
                body.extend(sec[it])
                continue
            k = len(decls)
            cnt, head, done = f"{PREFIX}count{k}", f"{PREFIX}loop{k}", f"{PREFIX}done{k}"
            decls.append(VarDecl(cnt, "int32"))
            body.append(Instruction("mov", 4, (var(cnt), imm(it.count))))
            body.append(LabelDef(head))
            emit(it.items)
            body.append(Instruction("sub", 4, (var(cnt), imm(1))))
            body.append(Instruction("if_zero_goto", 4, (var(cnt), label(done))))
            body.append(Instruction("goto", 0, (label(head),)))
            body.append(LabelDef(done))

    emit(protocol.items)
    return AsmProgram(list(prog.decls) + decls + body, {})
