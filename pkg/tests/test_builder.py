import itertools
import random
import time

import pytest

from dopc.asm import parse_asm
from dopc.builder import (
    Val, concretize, load_structure, parse_map, format_map, save_structure, solve, solve_instance, verify,
)
from dopc.errors import ConcretizeError, GadgetDefError, SolveError
from dopc.gadgets import Equation, Instance, data_view_switch, make_path, parse_gdef
from dopc.vm.descriptor import parse_descriptor

LISTING4 = """
gadget mov32 dst src
    ptr deref offset(0) = 3:int32
    ptr deref offset(4) = src
    ptr deref offset(8) = dst
"""


def tiny_target(slot_size=64, anchors="p0:slot+0, p1:slot+4, p2:slot+8", forbidden=""):
    return parse_descriptor(f"""
name = tiny
mode = movement-only
vm = moveonly
addr_width = 4
memory_size = 0x10000
slot_base = 0x9000
slot_size = {slot_size}
anchors = {anchors}
forbidden_bytes = {forbidden}
natives = mov32
""")


# -- gadget definitions -------------------------------------------------------

def test_listing4_equations():
    g = parse_gdef(LISTING4)["mov32"]
    assert len(g.equations) == 3
    (p0, c), (p1, f1), (p2, f2) = g.equations
    assert str(p0) == "ptr deref" and c.value == 3 and c.width == 4
    assert (f1.name, f2.name) == ("src", "dst")


def test_index_sugar():
    a = parse_gdef("gadget mov32 d s\n    buf deref index<int32>(3) = s\n    buf deref offset(20) = d\n")
    b = parse_gdef("gadget mov32 d s\n    buf deref offset(12) = s\n    buf deref offset(20) = d\n")
    assert a["mov32"].equations == b["mov32"].equations


def test_paths_on_both_sides():
    g = parse_gdef("gadget mov32 d s\n    srv deref offset(8) = bufp deref\n"
                   "    buf = s\n    bufp = d\n")["mov32"]
    assert str(g.equations[0][1]) == "bufp deref"


@pytest.mark.parametrize("text, msg", [
    ("gadget mov32 d s\n    nope deref = s\n    ptr = d\n", "unknown anchor"),
    ("gadget mov32 d s\n    ptr jump = s\n    ptr = d\n", "bad path step"),
    ("gadget mov32 d s\n    ptr deref = s\n", "never used"),
    ("gadget mov32 d\n", "takes 2 formals"),
])
def test_gdef_errors(text, msg):
    with pytest.raises(GadgetDefError, match=msg):
        parse_gdef(text, anchors={"ptr"})


# -- data-view switch ---------------------------------------------------------

def test_empty_program_no_instances(targets):
    assert len(data_view_switch(parse_asm(""), targets["moveonly"])) == 0


def test_goto_writes_pc(targets):
    t = targets["interp"]
    ll = parse_asm(":a\nif_zero_goto32 0 :b\n:b\n")
    req = data_view_switch(ll, t)
    (inst,) = req.instances
    label = [e for e in inst.equations if e.value == Val(1)]
    assert label, "jump target is the record index"


def test_instance_count_with_padding(targets):
    t = targets["moveonly"]
    ll = parse_asm("int32 a\nint32 b\nmov32 a b\n.advance_pc 2\nmov32 b a\n")
    assert len(data_view_switch(ll, t)) == 4


# -- solve / verify -----------------------------------------------------------

def _mov_structure(t):
    req = data_view_switch(parse_asm("int32 dst\nint32 src\nmov32 dst src\n"), t)
    return req, solve(req)


def test_fig2_layout(targets):
    t = targets["moveonly"]
    req, s = _mov_structure(t)
    words = [int.from_bytes(s.slot(0)[i:i + 4], "little") for i in range(0, 16, 4)]
    src, dst = (req.layout.address(n).const for n in ("src", "dst"))
    assert words == [t.slot_base + 4, 3, src, dst]
    assert verify(s, req)


def test_corrupted_pointer_fails(targets):
    req, s = _mov_structure(targets["moveonly"])
    off = s.regions[0][0]
    s.image[off] += 1
    rep = verify(s, req)
    assert not rep and rep.failures[0][1] == "ptr deref"


def test_forbidden_byte():
    t = tiny_target(anchors="ptr:slot+0", forbidden="0x0a")
    from dopc.gadgets import bind_gadget  # noqa: F401
    inst = Instance(0, "mov32", [Equation(make_path("ptr", [("deref",)]), 4, Val(0x0a))], [])
    with pytest.raises(SolveError):
        solve_instance(inst, t, Val(t.slot_base))
    inst = Instance(0, "mov32", [Equation(make_path("ptr", [("deref",)]), 4, Val(0x0b))], [])
    sol = solve_instance(inst, t, Val(t.slot_base))
    assert 0x0a not in sol.data


def test_deterministic(targets):
    from dopc.payloads import default_fixture
    from dopc.pipeline import build

    src = default_fixture("ssl").source
    a = build(src, targets["moveonly"]).structure
    b = build(src, targets["moveonly"]).structure
    assert bytes(a.image) == bytes(b.image) and a.placeholders == b.placeholders


def test_leak_relative_structure_verifies_under_two_bindings(targets):
    from dopc.payloads import default_fixture
    from dopc.pipeline import build

    b = build(default_fixture("relocator").source, targets["interp64"])
    assert b.structure.placeholders
    for base in (0x1000_0000, 0x2000_0000):
        leaks = {n: base + 0x1000 * i for i, n in enumerate(b.structure.leaks() + ["region_base"])}
        assert verify(b.structure, b.req, leaks)


# -- concretize ---------------------------------------------------------------

def _holey(n, leak="heap_base"):
    from dopc.builder import assemble
    from dopc.builder.solver import SlotSolution

    sol = SlotSolution(bytearray(8 * n), [(8 * i, 4, Val(0x40 + i, leak)) for i in range(n)], 8 * n)
    return assemble(bytearray(), [], [sol], [0])


def test_concretize_affine():
    s = _holey(1)
    out = concretize(s, {"heap_base": 0x7f0000})
    off = s.placeholders[0][0]
    assert out.image[off:off + 4] == (0x7f0040).to_bytes(4, "little")


def test_concretize_identity_without_placeholders(targets):
    _, s = _mov_structure(targets["moveonly"])
    assert concretize(s, {}).image == s.image


def test_concretize_missing_leak():
    with pytest.raises(ConcretizeError, match="heap_base"):
        concretize(_holey(1), {})


def test_concretize_linear_time():
    s = _holey(1000)
    concretize(s, {"heap_base": 0x1000})
    t0 = time.perf_counter()
    concretize(s, {"heap_base": 0x2000})
    assert time.perf_counter() - t0 < 0.010


def test_image_round_trip(tmp_path, targets):
    from dopc.payloads import default_fixture
    from dopc.pipeline import build

    s = build(default_fixture("relocator").source, targets["interp64"]).structure
    save_structure(s, str(tmp_path / "r.dopimg"))
    back = load_structure(str(tmp_path / "r.dopimg"))
    assert bytes(back.image) == bytes(s.image)
    assert back.placeholders == s.placeholders and back.regions == s.regions
    assert parse_map(format_map(s)) == (s.placeholders, s.regions)


# -- completeness against exhaustive placement --------------------------------

def random_problem(rnd, n_regions, buf):
    """Regions behind anchors p0..; each gets 1-3 small constant cells."""
    regions = []
    budget = 8 - n_regions          # pointer cells count too
    for _ in range(n_regions):
        cells = {}
        for _ in range(rnd.randint(1, max(1, min(3, budget - (n_regions - len(regions) - 1))))):
            w = rnd.choice((1, 4))
            off = rnd.choice((0, 1, 2, 4, 8))
            if any(o < off + w and off < o + ww for o, (ww, _) in cells.items()):
                continue
            cells[off] = (w, rnd.choice((0, 1, 2, 0x0101)) & ((1 << (8 * w)) - 1))
        budget -= len(cells)
        regions.append(cells)
    return regions


def exhaustive(regions, n, base):
    """First placement (any) where every byte requirement agrees, or None."""
    spans = []
    for cells in regions:
        lo = min(cells)
        hi = max(o + w for o, (w, _) in cells.items())
        spans.append((lo, hi))
    ranges = [range(0, n - (hi - lo) + 1) for lo, hi in spans]
    for starts in itertools.product(*ranges):
        mem = {}
        ok = True

        def put(at, w, v):
            for k, byte in enumerate(v.to_bytes(w, "little")):
                if mem.setdefault(at + k, byte) != byte:
                    return False
            return True

        for i, (s, (lo, _)) in enumerate(zip(starts, spans)):
            if not put(4 * i, 4, base + s - lo):
                ok = False
                break
            for off, (w, v) in regions[i].items():
                if not put(s - lo + off, w, v):
                    ok = False
                    break
            if not ok:
                break
        if ok and all(0 <= a < n for a in mem):
            return starts
    return None


def _instance(regions):
    eqs = []
    for i, cells in enumerate(regions):
        for off, (w, v) in cells.items():
            steps = [("deref",)] + ([("off", off)] if off else [])
            eqs.append(Equation(make_path(f"p{i}", steps), w, Val(v)))
    return Instance(0, "mov32", eqs, [])


@pytest.mark.parametrize("seed", range(60))
def test_solver_complete_on_small_buffers(seed):
    rnd = random.Random(seed)
    k = rnd.choice((1, 2, 3))
    n = rnd.choice((12, 14, 16, 20, 24, 32)) if k == 3 else rnd.choice((8, 12, 16, 24, 32, 48, 64))
    regions = random_problem(rnd, k, n)
    t = tiny_target(n)
    base = t.slot_base
    ref = exhaustive(regions, n, base)
    inst = _instance(regions)
    if ref is None:
        with pytest.raises(SolveError):
            solve_instance(inst, t, Val(base))
    else:
        sol = solve_instance(inst, t, Val(base))
        # check the solution by pointer chasing
        data = bytes(sol.data)
        for i, cells in enumerate(regions):
            ptr = int.from_bytes(data[4 * i:4 * i + 4], "little") - base
            for off, (w, v) in cells.items():
                assert int.from_bytes(data[ptr + off:ptr + off + w], "little") == v
