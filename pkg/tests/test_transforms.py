import random

import pytest

from dopc.asm import interpret, layout_memory, parse_asm
from dopc.asm.ir import GOTO_CLASS
from dopc.errors import ProtocolError, TransformError
from dopc.slang import compile_to_hl_asm
from dopc.transforms.branch_free import (
    STATE, branch_free_transform, choose_strategy, protocol_program, sections, sequence_program,
)
from dopc.transforms.cfg import build_cfg, find_loops, is_reducible
from dopc.transforms.memprep import memory_preparation
from dopc.transforms.protocol import (
    Protocol, Rep, expand_protocol, generate_protocol, parse_protocol, serialize_protocol,
)

from oracles import expand, random_protocol
from progs import random_inputs, random_script, run_hl

DIAMOND = """
int32 z
int32 r
if_zero_goto32 z :else
mov32 r 1
goto :end
:else
mov32 r 2
:end
add32 r r
"""

LOOP = """
int32 i
int32 r
mov32 i 0
:head
add32 r i
:cont
add32 i 1
gte32 i 3
if_zero_goto32 i :head
mov32 r r
"""


# -- cfg ----------------------------------------------------------------------

def test_blocks_dense_from_one():
    cfg = build_cfg(parse_asm(DIAMOND))
    assert cfg.ids() == [1, 2, 3, 4] and cfg.entry == 1
    assert cfg.blocks[1].succs == [2, 3]


def test_irreducible_rejected():
    prog = parse_asm("int32 c\nif_zero_goto32 c :b\n:a\nmov32 c c\n:b\nmov32 c c\ngoto :a\n")
    assert not is_reducible(build_cfg(prog))
    with pytest.raises(TransformError):
        find_loops(build_cfg(prog))


# -- protocols ----------------------------------------------------------------

def test_paper_example_expands():
    p = parse_protocol("(BB1,(3,BB2,BB3),BB4)")
    assert expand_protocol(p) == [1, 2, 3, 2, 3, 2, 3, 4]
    assert serialize_protocol(p) == "(1 (3 2 3) 4)"


def test_single_and_nested():
    assert expand_protocol(parse_protocol("(BB1)")) == [1]
    assert expand_protocol(parse_protocol("((2,(2,BB1)))")) == [1, 1, 1, 1]


@pytest.mark.parametrize("text", ["", "1 2", "(1 (x 2))", "(1 (2 3)", "((BB2 1))", "(1) 2"])
def test_malformed(text):
    with pytest.raises(ProtocolError):
        parse_protocol(text)


def _to_protocol(items):
    return Protocol(tuple(Rep(it[0], _to_protocol(it[1]).items) if isinstance(it, tuple) else it
                          for it in items))


@pytest.mark.parametrize("seed", range(100))
def test_round_trip(seed):
    items = random_protocol(random.Random(seed))
    p = _to_protocol(items)
    text = serialize_protocol(p)
    assert parse_protocol(text) == p
    assert serialize_protocol(parse_protocol(text)) == text
    assert expand_protocol(p) == expand(items)


def test_generate_diamond():
    assert serialize_protocol(generate_protocol(parse_asm(DIAMOND))) == "(1 2 3 4)"


def test_generate_loop():
    p = parse_asm(LOOP)
    # blocks: 1 prologue, 2 body, 3 step and test, 4 epilogue
    assert serialize_protocol(generate_protocol(p, {"head": 3})) == "(1 (3 2 3) 4)"
    with pytest.raises(TransformError, match="no iteration bound"):
        generate_protocol(p, {})


def test_generate_one_block_loop():
    src = LOOP.replace(":cont\n", "")
    assert serialize_protocol(generate_protocol(parse_asm(src), {"head": 3})) == "(1 (3 2) 3)"


def test_straight_line():
    src = "int32 a\nmov32 a 1\n:b\nmov32 a 2\n:c\nmov32 a 3\n"
    assert serialize_protocol(generate_protocol(parse_asm(src))) == "(1 2 3)"


def test_merged_headers_multiply():
    src = compile_to_hl_asm("""
        int32 x;
        proc main() {
            @maxiter(3) loop { @maxiter(4) loop { x = x + 1; if (x == 7) { break; } } break; }
        }""")
    p = generate_protocol(src)
    assert max(it.count for it in p.items if isinstance(it, Rep)) in (3, 12)


# -- branch-free --------------------------------------------------------------

def test_no_jumps_left():
    bf = branch_free_transform(parse_asm(DIAMOND), "cond")
    assert not any(i.opcode in GOTO_CLASS for i in bf.instructions)
    assert sorted(sections(bf)) == [1, 2, 3, 4]


def test_single_block_still_guarded():
    bf = branch_free_transform(parse_asm("int32 a\nint32 b\nadd32 a b\n"), "cond")
    assert list(sections(bf)) == [1]
    assert any(d.name == STATE for d in bf.decls)


def test_strategy_preference():
    assert choose_strategy({("cond_mov", 4), ("mul", 4), ("eq", 4)}) == "cond"
    assert choose_strategy({("mul", 4), ("eq", 4), ("load", 4)}) == "mul"
    assert choose_strategy({("load", 4), ("eq", 4)}) == "index"
    with pytest.raises(TransformError):
        choose_strategy({("add", 4)})


def test_reserved_prefix():
    with pytest.raises(TransformError):
        branch_free_transform(parse_asm("int32 %bf.x\nmov32 %bf.x 1\n"))


def supersequence(rnd, trace, blocks, extra=0.3):
    out = []
    for b in trace:
        while rnd.random() < extra:
            out.append(rnd.choice(blocks))
        out.append(b)
    out += [rnd.choice(blocks) for _ in range(3)]
    return out


def state_of(prog, inputs, order, fuel=10**7):
    seq = sequence_program(prog, order)
    return run_hl(seq, inputs, fuel)


@pytest.mark.parametrize("seed", range(200))
def test_random_programs_equivalent(seed):
    rnd = random.Random(seed)
    src = random_script(rnd)
    inputs = random_inputs(rnd)
    hl = compile_to_hl_asm(src)
    want = run_hl(hl, inputs)
    trace = expand_protocol(generate_protocol(hl))
    strategy = ("cond", "mul", "index")[seed % 3]
    bf = branch_free_transform(hl, strategy)
    blocks = sorted(sections(bf))
    got = run_hl(sequence_program(bf, trace), inputs, everything=True)
    assert {k: got[k] for k in want} == want
    assert got[STATE] == [0]
    got = run_hl(sequence_program(bf, supersequence(rnd, trace, blocks)), inputs)
    assert {k: got[k] for k in want} == want
    got = run_hl(protocol_program(bf, generate_protocol(hl)), inputs)
    assert {k: got[k] for k in want} == want


def inactive_is_noop(bf, inputs, rnd, plant=(), leaks=None):
    sec = sections(bf)
    m = layout_memory(bf, size=0x200000, leaks=leaks or {})
    for off, data in dict(plant).items():
        m.mem[off:off + len(data)] = data
    widths = {d.name: d.elem_width(4) for d in bf.decls}
    for name, vals in inputs.items():
        for i, v in enumerate(vals):
            m.write_var(name, widths[name], v, i)
    # user cells only: the interpreter also materializes immediate cells
    user = [(m.addr[d.name], m.addr[d.name] + d.size(4)) for d in bf.decls
            if not d.name.startswith("%")]

    def visible(mem):
        return [bytes(mem[lo:hi]) for lo, hi in user]

    for bid, body in sec.items():
        for state in (0, bid + 1, rnd.randrange(1, 2**32)):
            if state == bid:
                continue
            m.write_var(STATE, 4, state)
            one = bf.copy([d for d in bf.decls] + body)
            r = interpret(one, m)
            assert visible(r.mem) == visible(m.mem), (bid, state)
            assert r.read_var(STATE, 4) == state


@pytest.mark.parametrize("seed", range(40))
def test_inactive_blocks_change_nothing(seed):
    rnd = random.Random(500 + seed)
    hl = compile_to_hl_asm(random_script(rnd))
    bf = branch_free_transform(hl, ("cond", "mul", "index")[seed % 3])
    inactive_is_noop(bf, random_inputs(rnd), rnd)


# -- the four scripts ---------------------------------------------------------

def _script_inputs(name, targets):
    from dopc.payloads import default_fixture

    fx = default_fixture(name)
    return fx, fx.plant(targets["interp"], 0), fx.leaks


def run_planted(prog, plant, leaks, fuel=10**8):
    m = layout_memory(prog, size=0x200000, leaks=leaks)
    for off, data in plant.items():
        m.mem[off:off + len(data)] = data
    r = interpret(prog, m, fuel)
    return {d.name: bytes(r.mem[m.addr[d.name]:m.addr[d.name] + d.size(4)])
            for d in prog.decls if not d.name.startswith("%")}


@pytest.mark.parametrize("name", ["lev", "ssl", "relocator", "jitrop_unrolled"])
def test_scripts_branch_free(name, targets):
    fx, plant, leaks = _script_inputs(name, targets)
    hl = compile_to_hl_asm(fx.source)
    want = run_planted(hl, plant, leaks)
    trace = expand_protocol(generate_protocol(hl))
    bf = branch_free_transform(hl, "cond")
    got = run_planted(sequence_program(bf, trace), plant, leaks)
    assert {k: got[k] for k in want} == want
    rnd = random.Random(7)
    sup = supersequence(rnd, trace, sorted(sections(bf)), extra=0.05)
    got = run_planted(sequence_program(bf, sup), plant, leaks)
    assert {k: got[k] for k in want} == want
    inactive_is_noop(bf, {}, rnd, plant, leaks)


# -- memory preparation -------------------------------------------------------

def test_memprep_single_variable(targets):
    t = targets["interactive"]
    out = memory_preparation(parse_asm("int32 x = 7\nadd32 x x\n"), t)
    (d,) = out.decls
    assert d.address == t.scratch[0] + t.scratch_gap
    first = out.instructions[0]
    assert (first.opcode, first.operands[0].name, first.operands[1].value) == ("mov", "x", 7)
    assert out.prologue_length == 1


def test_memprep_array_stores(targets):
    out = memory_preparation(parse_asm("int32 a[3] = 1, 2, 3\n"), targets["interactive"])
    assert [(i.opcode, i.width, i.operands[0].value) for i in out.instructions] == [
        ("mov", 4, 0), ("mov", 4, 4), ("mov", 4, 8)]


def test_memprep_identity(targets):
    p = parse_asm("add32 @pc 4\n")
    assert memory_preparation(p, targets["interactive"]).items == p.items


def test_memprep_too_small(targets):
    with pytest.raises(TransformError, match="too small"):
        memory_preparation(parse_asm("byte big[1048576]\n"), targets["interactive"])


def test_memprep_preserves_semantics(targets):
    t = targets["interactive"]
    p = parse_asm("int32 x = 7\nint32 y = 5\nadd32 x y\nsub32 y 1\n")
    q = memory_preparation(p, t)
    a = run_hl(p, {})
    m = layout_memory(q, size=0x200000)
    r = interpret(q, m)
    assert [r.read_var("x", 4), r.read_var("y", 4)] == a["x"] + a["y"]
