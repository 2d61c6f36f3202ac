"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

The lines are collected in ``RESULTS`` and printed by the terminal-summary
hook in conftest.py; running this file directly does the same.
Every comparison is exact unless a tolerance is named next to it.
"""

import random
import sys
import time
from contextlib import contextmanager

import pytest

from dopc.asm import parse_asm
from dopc.builder import concretize
from dopc.errors import SynthesisError
from dopc.opgraph import and_or_report, build_op_graph, load_recipe_files, select_plan
from dopc.payloads import (
    SUPPORTED, VARIANTS, jitrop_fixture, lev_fixture, relocator_fixture, run_scenario,
    script_source, ssl_fixture,
)
from dopc.payloads.scenarios import CODE_PTR_TO_BASE, FIXTURE_BASE, POP_RET
from dopc.pipeline import build, check, op_graph
from dopc.slang import compile_to_hl_asm
from dopc.transforms.branch_free import branch_free_transform, sections
from dopc.transforms.protocol import (
    expand_protocol, generate_protocol, parse_protocol, serialize_protocol,
)
from dopc.vm.driver import drive
from oracles import fixed_point, levenshtein, min_plan_weight, pattern_scan, random_protocol
from progs import random_inputs, random_script, run_hl

LEV_SECONDS = 60.0          # per target, build included
CONCRETIZE_SECONDS = 0.010  # 1000 placeholders

RESULTS = []


@contextmanager
def criterion(n, title):
    note = {"detail": ""}
    try:
        yield note
    except BaseException as e:
        RESULTS.append((n, title, False, f"{type(e).__name__}: {e}".splitlines()[0][:160]))
        raise
    RESULTS.append((n, title, True, note["detail"]))


def format_results():
    return [f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{d}]" if d else "")
            for n, title, ok, d in sorted(RESULTS)]


# -- 1 ------------------------------------------------------------------------

def lev_pairs():
    rnd = random.Random(2024)
    pairs = []
    for _ in range(25):
        pairs.append(tuple(bytes(rnd.choice(b"abcde") for _ in range(rnd.randint(0, 8)))
                           for _ in range(2)))
    pairs.append((b"kitten!", b"sittings"))    # 7 against 8 characters
    return pairs


@pytest.mark.parametrize("target", ["interp", "moveonly", "interactive"])
def test_c1_levenshtein_end_to_end(target):
    with criterion(1, f"Levenshtein end to end on {target}") as note:
        t0 = time.perf_counter()
        b = build(script_source("lev"), target)
        if target == "interactive":
            assert {"branch-free", "mem-prep", "interactive"} <= b.modes
            assert b.protocol is not None
        if target == "moveonly":
            plan = select_plan(op_graph(b.target), [])
            assert plan.recipe_for(("dec", 1)).rid == "dec8-table"
            assert ("inc", 4) in plan.recipe_for(("add", 4)).uses()
        pairs = lev_pairs()
        for s1, s2 in pairs:
            r = run_scenario(lev_fixture(s1, s2), target, built=b)
            assert r.status == "ok", (s1, s2, r.status)
            assert r.vm_output == levenshtein(s1, s2), (s1, s2, r.vm_output)
        dt = time.perf_counter() - t0
        assert dt < LEV_SECONDS, dt
        note["detail"] = f"{len(pairs)} pairs, {dt:.1f}s"


# -- 2 ------------------------------------------------------------------------

def test_c2_scripts_compile_unmodified():
    with criterion(2, "four scripts compile unmodified on every supporting target") as note:
        cells = 0
        for name, targets in SUPPORTED.items():
            src = script_source(name)
            for t in targets:
                b = build(src, t)
                assert b.structure is not None and check(b), (name, t)
                assert script_source(name) == src
                cells += 1
        assert set(SUPPORTED) == {"lev", "ssl", "relocator", "jitrop"}
        note["detail"] = f"{cells} script/target cells"


# -- 3 ------------------------------------------------------------------------

LOADS = {("load", w) for w in (1, 2, 4, 8)}
IFZ = ("if_zero_goto", 4)
ADD = ("add", 4)


def shipped_recipes():
    from importlib import resources

    return load_recipe_files([resources.files("dopc").joinpath("data", "recipes", "reusable.recipe")])


def test_c3_op_graph_ground_truth():
    from test_opgraph import graph_of, random_graph

    with criterion(3, "op-graph synthesizability and And/Or report") as note:
        assert build_op_graph(shipped_recipes(), LOADS | {IFZ}).synthesizable(ADD) is True
        g = build_op_graph(shipped_recipes(), LOADS)
        assert g.synthesizable(ADD) is False
        alts = and_or_report(g, [ADD]).alternatives[ADD]
        assert frozenset({IFZ}) in alts
        with pytest.raises(SynthesisError):
            select_plan(g, [ADD])
        for seed in range(50):
            rnd = random.Random(seed)
            _, native, recipes = random_graph(rnd, rnd.randint(2, 10), rnd.randint(1, 10))
            got = graph_of(native, recipes).synthesizable_set()
            assert got == fixed_point(native, [(h, frozenset(b)) for h, b in recipes]), seed
        note["detail"] = "50 random graphs"


# -- 4 ------------------------------------------------------------------------

def test_c4_minimal_weight_plans():
    from test_opgraph import _weight, graph_of, random_graph

    with criterion(4, "select_plan weight equals exhaustive minimum") as note:
        checked = 0
        for seed in range(100):
            rnd = random.Random(1000 + seed)
            nodes, native, recipes = random_graph(rnd, rnd.randint(3, 8), rnd.randint(1, 6))
            g = graph_of(native, recipes)
            cost = g.costs()
            for op in nodes:
                assert cost.get(op, float("inf")) == min_plan_weight(op, native, recipes, _weight)
                checked += 1
        note["detail"] = f"{checked} ops over 100 graphs"


# -- 5 ------------------------------------------------------------------------

def test_c5_branch_free_semantics(targets):
    from test_transforms import (
        STATE, _script_inputs, inactive_is_noop, run_planted, supersequence,
    )
    from dopc.transforms.branch_free import sequence_program

    with criterion(5, "branch-free equals direct execution") as note:
        for seed in range(200):
            rnd = random.Random(seed)
            src = random_script(rnd)
            inputs = random_inputs(rnd)
            hl = compile_to_hl_asm(src)
            want = run_hl(hl, inputs)
            trace = expand_protocol(generate_protocol(hl))
            bf = branch_free_transform(hl, ("cond", "mul", "index")[seed % 3])
            got = run_hl(sequence_program(bf, trace), inputs, everything=True)
            assert {k: got[k] for k in want} == want and got[STATE] == [0], seed
            sup = supersequence(rnd, trace, sorted(sections(bf)))
            got = run_hl(sequence_program(bf, sup), inputs)
            assert {k: got[k] for k in want} == want, seed
            inactive_is_noop(bf, inputs, rnd)
        for name in ("lev", "ssl", "relocator", "jitrop"):
            fx, plant, leaks = _script_inputs(name, targets)
            hl = compile_to_hl_asm(fx.source)
            want = run_planted(hl, plant, leaks)
            trace = expand_protocol(generate_protocol(hl))
            bf = branch_free_transform(hl, "cond")
            for order in (trace, supersequence(random.Random(7), trace, sorted(sections(bf)), 0.05)):
                got = run_planted(sequence_program(bf, order), plant, leaks)
                assert {k: got[k] for k in want} == want, name
            inactive_is_noop(bf, {}, random.Random(7), plant, leaks)
        note["detail"] = "200 programs + 4 scripts, trace and supersequence"


# -- 6 ------------------------------------------------------------------------

def test_c6_protocols():
    from test_transforms import _to_protocol
    from oracles import expand

    with criterion(6, "protocol expansion and round trip") as note:
        p = parse_protocol("(BB1,(3,BB2,BB3),BB4)")
        assert expand_protocol(p) == [1, 2, 3, 2, 3, 2, 3, 4]
        for seed in range(100):
            items = random_protocol(random.Random(seed))
            q = _to_protocol(items)
            assert parse_protocol(serialize_protocol(q)) == q
            assert expand_protocol(q) == expand(items)
        note["detail"] = "100 random protocols"


# -- 7 ------------------------------------------------------------------------

MODE_SETS = ("", "branch-free", "mem-prep", "branch-free,mem-prep")


def scenario_matrix():
    for family, targets in SUPPORTED.items():
        for script in (family,) + VARIANTS.get(family, ()):
            for t in targets:
                for modes in (MODE_SETS if t != "interactive" else ("",)):
                    yield script, t, modes


def test_c7_solver_soundness_and_completeness():
    from test_builder import _instance, exhaustive, random_problem, tiny_target
    from dopc.builder import Val, solve_instance
    from dopc.errors import SolveError

    with criterion(7, "verify on the scenario matrix; completeness on small buffers") as note:
        solved = 0
        for script, t, modes in scenario_matrix():
            b = build(script_source(script), t, modes)
            report = check(b)
            assert report.ok and not report.failures, (script, t, modes, report.failures[:3])
            solved += len(b.req.instances)
        agree = 0
        for seed in range(100):
            rnd = random.Random(seed)
            k = rnd.choice((1, 2, 3))
            n = rnd.choice((12, 16, 24, 32)) if k == 3 else rnd.choice((8, 16, 32, 48, 64))
            regions = random_problem(rnd, k, n)
            t = tiny_target(n)
            want = exhaustive(regions, n, t.slot_base) is not None
            try:
                solve_instance(_instance(regions), t, Val(t.slot_base))
                got = True
            except SolveError:
                got = False
            assert got == want, seed
            agree += 1
        note["detail"] = f"{solved} instances verified; {agree} small problems"


# -- 8 ------------------------------------------------------------------------

def run_asm(src, t, names):
    b = build(parse_asm(src), t)
    m, r = drive(b.target, b.structure, b.protocol)
    assert r.ok, r.status_name
    return {n: r.read(b.address(n, m.leaks), w) for n, w in names}, b


def test_c8_bootstrap_tricks():
    with criterion(8, "bootstrap tricks: dec8 table, doubling store, self-modifying mov") as note:
        for x, want in ((5, 4), (0, 255)):
            out, b = run_asm(f"byte x = {x}\ndec8 x\n", "moveonly", [("x", 1)])
            assert out["x"] == want
            (table,) = [d for d in b.ll.decls if d.count == 256]
            assert [v.value for v in table.init] == [(i - 1) % 256 for i in range(256)]
        assert select_plan(op_graph(b.target), []).recipe_for(("dec", 1)).rid == "dec8-table"

        rnd = random.Random(8)
        for _ in range(50):
            old, new = rnd.randrange(2**32), rnd.randrange(2**32)
            out, b = run_asm(f"int32 a = {old}\nint32 v = {new}\naddr p = &a\nstore32 p v\n",
                             "interactive", [("a", 4)])
            assert out["a"] == new
        assert select_plan(op_graph(b.target), []).recipe_for(("store", 4)).rid == "store32-doubling"

        rnd = random.Random(9)
        for _ in range(50):
            a, c, w = (rnd.randrange(2**32) for _ in range(3))
            pick = rnd.randrange(2)
            src = (f"int32 cells[2] = {a}, {c}\nint32 v = 0\nint32 w = {w}\n"
                   f"addr p = &cells+{4 * pick}\nload32 v p\nstore32 p w\n")
            out, b = run_asm(src, "interp", [("v", 4), ("cells", 4)])
            assert out["v"] == (a, c)[pick]
        plan = select_plan(op_graph(b.target), [])
        assert plan.recipe_for(("load", 4)).rid == "load32-selfmod"
        assert plan.recipe_for(("store", 4)).rid == "store32-selfmod"
        note["detail"] = "2 + 50 + 50 cases"


# -- 9 ------------------------------------------------------------------------

def test_c9_concretization():
    from test_builder import _holey

    with criterion(9, "relocator concretization and linear-time patching") as note:
        offsets = [0x1000 + 0x37 * i for i in range(8)]
        for tname in ("interp", "interp64"):
            b = build(script_source("relocator"), tname)
            s = b.structure
            region = {b.target.relative: 0x40000000} if b.target.relative else {}
            leaks_a = dict(region, code_ptr=0x08048123)
            leaks_b = dict(region, code_ptr=0x7f001234)
            img_a = bytes(concretize(s, leaks_a).image)
            img_b = bytes(concretize(s, leaks_b).image)
            holes = set()
            for off, w, _ in s.placeholders:
                holes.update(range(off, off + w))
            diff = {i for i, (x, y) in enumerate(zip(img_a, img_b)) if x != y}
            assert diff and diff <= holes, tname
            for leaks in (leaks_a, leaks_b):
                fx = relocator_fixture(offsets, leaks["code_ptr"])
                r = run_scenario(fx, tname, built=b)
                want = [leaks["code_ptr"] - CODE_PTR_TO_BASE + o for o in offsets]
                assert r.vm_output == want, tname
        s = _holey(1000)
        concretize(s, {"heap_base": 0x1000})
        t0 = time.perf_counter()
        concretize(s, {"heap_base": 0x2000})
        dt = time.perf_counter() - t0
        assert dt <= CONCRETIZE_SECONDS, dt
        note["detail"] = f"1000 placeholders in {dt * 1000:.2f} ms"


# -- 10 -----------------------------------------------------------------------

@pytest.mark.parametrize("target", ["interp", "moveonly"])
def test_c10_jitrop_scan(target):
    with criterion(10, f"JIT-ROP scan of 1 KB on {target}") as note:
        fx = jitrop_fixture(0)
        code = fx.inputs["code"]
        assert len(code) == 1024
        want = [FIXTURE_BASE + a for a in pattern_scan(code, POP_RET)]
        r = run_scenario(fx, target)
        assert r.status == "ok" and r.vm_output == want
        note["detail"] = f"{len(want)} gadgets found"


# -- 11 -----------------------------------------------------------------------

DIRECTION = [
    ("jitrop", "jitrop_unrolled", "interp", jitrop_fixture(0)),
    ("jitrop", "jitrop_unrolled", "moveonly", jitrop_fixture(0)),
    ("ssl", "ssl_unrolled", "interp", ssl_fixture(0)),
    ("ssl", "ssl_unrolled", "moveonly", ssl_fixture(0)),
    ("lev", "lev_constcheck", "interactive", lev_fixture(b"kitten!", b"sittings")),
    ("lev", "lev_constcheck", "interp", lev_fixture(b"kittens!", b"sittings")),
]


@pytest.mark.parametrize("base, variant, target, fx", DIRECTION,
                         ids=[f"{v}-{t}" for _, v, t, _ in DIRECTION])
def test_c11_optimizations_reduce_gadgets(base, variant, target, fx):
    with criterion(11, f"{variant} on {target} runs fewer gadgets") as note:
        a = run_scenario(fx, target)
        b = run_scenario(type(fx)(fx.name, variant, fx.inputs, fx.leaks), target)
        assert a.status == b.status == "ok"
        assert a.vm_output == b.vm_output
        assert b.executed_gadgets < a.executed_gadgets, (a.executed_gadgets, b.executed_gadgets)
        note["detail"] = f"{a.executed_gadgets} -> {b.executed_gadgets}"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
