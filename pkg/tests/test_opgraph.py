import random
from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from dopc.asm import interpret, layout_memory, parse_asm
from dopc.asm.ir import GOTO_CLASS
from dopc.errors import SynthesisError
from dopc.opgraph import and_or_report, build_op_graph, load_recipe_files, lower, parse_recipes, select_plan
from dopc.pipeline import op_graph

from oracles import fixed_point, min_plan_weight

SHIPPED = [resources.files("dopc").joinpath("data", "recipes", "reusable.recipe")]
LOADS = {("load", w) for w in (1, 2, 4, 8)}
IFZ = ("if_zero_goto", 4)
ADD = ("add", 4)

# ops usable in generated recipe bodies, with how to write one instance
POOL = {
    ("mov", 4): "mov32 a b", ("add", 4): "add32 a b", ("sub", 4): "sub32 a b",
    ("mul", 4): "mul32 a b", ("eq", 4): "eq32 a b", ("gte", 4): "gte32 a b",
    ("neq", 4): "neq32 a b", ("inc", 4): "inc32 a", ("dec", 4): "dec32 a",
    ("if_zero_goto", 4): "if_zero_goto32 a :%l", ("goto", 0): "goto :%l",
}
HEAD = {("goto", 0): "goto :x", ("if_zero_goto", 4): "if_zero_goto32 a :x"}


def recipe_text(head, body):
    if head in HEAD:
        lines = [HEAD[head]]
    elif head[0] in ("inc", "dec"):
        lines = [f"{head[0]}32 a"]
    else:
        lines = [f"{head[0]}32 a b"]
    lines += ["    int32 %u", "    int32 %v"]
    lines += ["    " + POOL[u].replace(" a", " %u").replace(" b", " %v") for u in body]
    lines.append("    :%l")
    return "\n".join(lines) + "\n"


def random_graph(rnd, n_nodes, n_recipes, goto_ok=True):
    pool = [s for s in POOL if goto_ok or s not in (("if_zero_goto", 4), ("goto", 0))]
    nodes = rnd.sample(pool, min(n_nodes, len(pool)))
    native = set(rnd.sample(nodes, rnd.randint(0, max(1, len(nodes) // 3))))
    recipes = []
    for _ in range(n_recipes):
        head = rnd.choice(nodes)
        others = [n for n in nodes if n != head]
        body = [rnd.choice(others) for _ in range(rnd.randint(1, 4))]
        recipes.append((head, body))
    return nodes, native, recipes


def graph_of(native, recipes):
    text = "".join(recipe_text(h, b) for h, b in recipes)
    return build_op_graph(parse_recipes(text), native)


def test_fig3_add_grounded():
    rs = load_recipe_files(SHIPPED)
    g = build_op_graph(rs, LOADS | {IFZ})
    assert g.synthesizable(ADD)
    assert g.recipes[ADD][0].uses() == {("mov", 4), ("if_zero_goto", 4), ("dec", 4), ("inc", 4), ("goto", 0)}


def test_fig3_without_conditional_goto():
    g = build_op_graph(load_recipe_files(SHIPPED), LOADS)
    assert not g.synthesizable(ADD)
    report = and_or_report(g, [ADD])
    alts = report.alternatives[ADD]
    assert frozenset({IFZ}) in alts
    assert all(a for a in alts)
    assert "if_zero_goto32" in report.format()
    with pytest.raises(SynthesisError) as ei:
        select_plan(g, [ADD])
    assert "add32" in str(ei.value)


def test_empty_graph():
    g = build_op_graph([], {("mov", 4)})
    assert g.nodes == {("mov", 4)} and g.synthesizable(("mov", 4))


def test_two_recipes_and_or():
    rs = parse_recipes("store32 p q\n    mov32 p q\nstore32 p q\n    add32 p q\n")
    g = build_op_graph(rs, set())
    assert g.edges()[("store", 4)] == [frozenset({("mov", 4)}), frozenset({("add", 4)})]


def test_native_beats_goto_recipe():
    g = build_op_graph(load_recipe_files(SHIPPED), LOADS | {IFZ, ADD})
    assert select_plan(g, [ADD]).recipe_for(ADD) is None


def test_cycle_not_grounded():
    rs = parse_recipes("add32 a b\n    sub32 a b\nsub32 a b\n    add32 a b\n")
    g = build_op_graph(rs, {("mov", 4)})
    assert not g.synthesizable(ADD)
    with pytest.raises(SynthesisError):
        lower(parse_asm("int32 x\nint32 y\nadd32 x y\n"), g)


@pytest.mark.parametrize("seed", range(50))
def test_fixed_point_matches_brute_force(seed):
    rnd = random.Random(seed)
    nodes, native, recipes = random_graph(rnd, rnd.randint(2, 10), rnd.randint(1, 10))
    g = graph_of(native, recipes)
    ref = fixed_point(native, [(h, frozenset(b)) for h, b in recipes])
    assert g.synthesizable_set() == ref


def _weight(sig):
    return 10 if sig[0] in GOTO_CLASS else 1


@pytest.mark.parametrize("seed", range(60))
def test_plan_weight_is_minimal(seed):
    rnd = random.Random(1000 + seed)
    nodes, native, recipes = random_graph(rnd, rnd.randint(3, 8), rnd.randint(1, 6))
    g = graph_of(native, recipes)
    cost = g.costs()
    for op in nodes:
        ref = min_plan_weight(op, native, recipes, _weight)
        assert cost.get(op, float("inf")) == ref, op


@pytest.mark.parametrize("seed", range(20))
def test_concatenation(seed):
    rnd = random.Random(2000 + seed)
    _, native, ra = random_graph(rnd, 8, 4)
    _, _, rb = random_graph(rnd, 8, 4)
    whole = graph_of(native, ra + rb)
    parts = graph_of(native, ra).merged(graph_of(native, rb))
    assert whole.structure() == parts.structure()


@pytest.mark.parametrize("seed", range(20))
def test_monotone(seed):
    rnd = random.Random(3000 + seed)
    _, native, recipes = random_graph(rnd, 9, 8)
    small = graph_of(native, recipes[:4]).synthesizable_set()
    assert small <= graph_of(native, recipes).synthesizable_set()


def test_weight_annotation_overrides():
    rs = parse_recipes("add32 d s\n    mov32 d s\n    mov32 d s\n    mov32 d s\n@weight 2\nadd32 d s\n    mov32 d s\n")
    plan = select_plan(build_op_graph(rs, {("mov", 4)}), [ADD])
    assert plan.total(ADD) == 2 and plan.recipe_for(ADD).weight == 2


# -- lowering ---------------------------------------------------------------

RICH = {("add", 4), ("sub", 4), ("inc", 4), ("dec", 4), ("mov", 4)}


def test_peephole_inc_and_zero():
    g = build_op_graph([], RICH)
    ll = lower(parse_asm("int32 x\nadd32 x 1\nsub32 x 1\nadd32 x 0\nsub32 x 0\n"), g)
    assert [i.opcode for i in ll.instructions] == ["inc", "dec"]


def test_lowered_add_uses_natives_only():
    g = build_op_graph(load_recipe_files(SHIPPED), LOADS | {IFZ})
    ll = lower(parse_asm("int32 x\nint32 y\nadd32 x y\n"), g)
    assert {i.signature for i in ll.instructions} <= g.native
    m = layout_memory(ll, size=1 << 16)
    m.write_var("x", 4, 30)
    m.write_var("y", 4, 12)
    r = interpret(ll, m)
    assert r.read_var("x", 4) == 42


SMALL_OPS = ["mov", "add", "inc", "eq", "neq", "gte"]
FULL_OPS = ["mov", "add", "sub", "mul", "inc", "dec", "eq", "neq", "gte"]
# no loops on the interactive server, so no variable multiply either
LINEAR_OPS = [o for o in FULL_OPS if o != "mul"]


def random_straight_line(rnd, ops, nvars=4, n=8, imm_max=2**32 - 1):
    lines = [f"int32 x{i}" for i in range(nvars)]
    for _ in range(n):
        op = rnd.choice(ops)
        d = f"x{rnd.randrange(nvars)}"
        if op in ("inc", "dec"):
            lines.append(f"{op}32 {d}")
        else:
            s = f"x{rnd.randrange(nvars)}" if rnd.random() < 0.7 else str(rnd.randint(0, imm_max))
            lines.append(f"{op}32 {d} {s}")
    return "\n".join(lines) + "\n"


def _check_lowering(target, ops, vmax, imm_max, seed):
    rnd = random.Random(seed)
    src = random_straight_line(rnd, ops, imm_max=imm_max)
    hl = parse_asm(src)
    ll = lower(hl, op_graph(target))
    assert {i.signature for i in ll.instructions} <= op_graph(target).native
    init = [rnd.randint(0, vmax) for _ in range(4)]
    out = []
    for p in (hl, ll):
        m = layout_memory(p, size=1 << 16)
        for i, v in enumerate(init):
            m.write_var(f"x{i}", 4, v)
        r = interpret(p, m, fuel=10**7)
        out.append([r.read_var(f"x{i}", 4) for i in range(4)])
    assert out[0] == out[1], src


@pytest.mark.parametrize("seed", range(100))
def test_lowering_preserves_semantics_interp(seed, targets):
    _check_lowering(targets["interp"], FULL_OPS, 2**32 - 1, 2**32 - 1, seed)


@pytest.mark.parametrize("seed", range(60))
def test_lowering_preserves_semantics_interactive(seed, targets):
    _check_lowering(targets["interactive"], LINEAR_OPS, 2**32 - 1, 2**32 - 1, seed)


@pytest.mark.parametrize("seed", range(40))
def test_lowering_preserves_semantics_moveonly(seed, targets):
    # loop-based recipes: keep values small so the reference run stays short
    _check_lowering(targets["moveonly"], SMALL_OPS, 9, 9, seed)
