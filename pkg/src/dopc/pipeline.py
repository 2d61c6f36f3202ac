"""The compile pipeline: script -> HL asm -> modes -> LL asm -> requirements -> image."""

import os
from dataclasses import dataclass, field

from .asm.ir import AsmProgram
from .builder import save_structure, solve, verify
from .builder.image import atomic_write
from .errors import DopError, TargetError
from .gadgets import data_view_switch
from .opgraph import build_op_graph, load_recipe_files, lower
from .slang import compile_to_hl_asm
from .transforms.branch_free import branch_free_transform, protocol_program, sequence_program
from .transforms.memprep import memory_preparation
from .transforms.protocol import expand_protocol, generate_protocol, serialize_protocol
from .vm.descriptor import load_target

MODES = ("branch-free", "mem-prep", "interactive")
STAGES = ("hlasm", "llasm", "reqs", "image", "protocol")

_GRAPHS = {}


class UsageError(DopError):
    stage = "usage"


def op_graph(target):
    """Op-graph of a target's natives and recipes (cached per target directory)."""
    key = (target.directory, target.name)
    if key not in _GRAPHS:
        recipes = load_recipe_files(target.recipe_paths())
        _GRAPHS[key] = build_op_graph(recipes, target.native_sigs, anchors=target.anchor_names(),
                                      resident=target.resident)
    return _GRAPHS[key]


def resolve_modes(modes, target):
    """Mode set after applying the target's needs.

    Interactive targets always get the interactive mode, which implies
    branch-free execution; targets without a data segment need memory
    preparation.
    """
    if isinstance(modes, str):
        modes = [m for m in modes.split(",") if m.strip()]
    out = {m.strip() for m in modes}
    bad = out - set(MODES)
    if bad:
        raise UsageError(f"unknown mode(s): {', '.join(sorted(bad))}")
    if "interactive" in out and not target.interactive:
        raise TargetError(f"target {target.name} has no interactive driver")
    if target.interactive:
        out |= {"interactive", "branch-free"}
    if target.data_size == 0:
        out.add("mem-prep")
    return frozenset(out)


@dataclass
class Build:
    target: object
    modes: frozenset
    hl: AsmProgram
    program: AsmProgram = None      # after the branch-free transform
    ll: AsmProgram = None
    req: object = None
    structure: object = None
    protocol: object = None
    strategy: str = None
    stages: dict = field(default_factory=dict)

    @property
    def trace(self):
        return expand_protocol(self.protocol) if self.protocol is not None else None

    def address(self, name, leaks):
        """Concrete address of variable ``name`` under ``leaks``."""
        return self.req.layout.address(name).resolve(leaks)

    def symbols(self):
        """(name, width, count, address Val) for every user variable."""
        aw = self.target.addr_width
        out = []
        for d in self.ll.decls:
            if d.name.startswith("%"):
                continue
            out.append((d.name, d.elem_width(aw), d.count or 1, self.req.layout.address(d.name)))
        return out


def build(source, target, modes=(), maxiter_default=None, stop="image", strategy="auto"):
    """Run the pipeline on ``source`` (script text or HL program) for ``target``.

    ``stop`` is the last stage to run: hlasm, llasm, reqs or image.
    """
    if isinstance(target, str):
        target = load_target(target)
    modes = resolve_modes(modes, target)
    if isinstance(source, AsmProgram):
        hl = source
    else:
        hl = compile_to_hl_asm(source, target.addr_width, maxiter_default or None)
    b = Build(target, modes, hl)
    graph = op_graph(target)
    prog = hl
    if "branch-free" in modes:
        b.protocol = generate_protocol(hl)
        bf = branch_free_transform(hl, strategy, graph.synthesizable_set(), target.addr_width)
        b.strategy = bf.strategy
        if target.interactive:
            prog = bf
        elif {("if_zero_goto", 4), ("goto", 0)} <= graph.synthesizable_set():
            prog = protocol_program(bf, b.protocol)
        else:
            # no way to loop: spell out the whole trace
            prog = sequence_program(bf, expand_protocol(b.protocol))
    b.program = prog
    if stop == "hlasm":
        return b
    ll = lower(prog, graph)
    if "mem-prep" in modes:
        ll = memory_preparation(ll, target, graph)
    b.ll = ll
    if stop == "llasm":
        return b
    b.req = data_view_switch(ll, target)
    if stop == "reqs":
        return b
    b.structure = solve(b.req)
    return b


def format_requirements(req):
    """One paragraph per gadget instance with ``path = value`` lines."""
    out = []
    for inst in req.instances:
        lines = [f"# {inst.index} {inst.gadget} block {inst.block}: {inst.text}"]
        if inst.grow:
            lines.append(f"# packet grows by {inst.grow}")
        for eq in inst.equations:
            lines.append(f"{eq.path} = {eq.value}")
        out.append("\n".join(lines))
    return "\n\n".join(out) + "\n"


def format_symbols(b):
    return "".join(f"{n} {w} {c} {a}\n" for n, w, c, a in b.symbols())


def parse_symbols(text):
    from .builder import parse_val

    out = {}
    for line in text.splitlines():
        if line.strip():
            n, w, c, a = line.split(None, 3)
            out[n] = (int(w), int(c), parse_val(a))
    return out


def write_artifacts(b, out_dir, stem, emit="image"):
    """Write every artifact up to ``emit``; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    order = ["hlasm", "llasm", "reqs", "image"]
    last = order.index("image" if emit == "protocol" else emit)
    paths = []

    def put(ext, text):
        p = os.path.join(out_dir, f"{stem}.{ext}")
        atomic_write(p, text)
        paths.append(p)

    put("hlasm", str(b.hl))
    if b.program is not b.hl and b.program is not None:
        put("bf.hlasm", str(b.program))
    if last >= 1:
        put("llasm", str(b.ll))
    if last >= 2:
        put("reqs", format_requirements(b.req))
    if last >= 3:
        img = os.path.join(out_dir, f"{stem}.dopimg")
        save_structure(b.structure, img)
        paths += [img, os.path.splitext(img)[0] + ".dopmap"]
        put("dopsym", format_symbols(b))
    if b.protocol is not None:
        put("protocol", serialize_protocol(b.protocol) + "\n")
    return paths


def check(b):
    """Independent verification of the solved structure."""
    return verify(b.structure, b.req)
