"""The shipped example scripts, their input plants and output extractors.

A fixture knows where its script reads inputs (the target's fixture
region) and which variables hold the result. Oracles live in the tests;
``run_scenario`` only takes one as a callable so it stays independent of
the pipeline.
"""

import random
from dataclasses import dataclass, field
from importlib import resources

from ..pipeline import build
from ..vm.descriptor import load_target
from ..vm.driver import drive

FIXTURE_BASE = 0x1c0000
SCENARIOS = ("lev", "ssl", "relocator", "jitrop")
VARIANTS = {"lev": ("lev_constcheck",), "ssl": ("ssl_unrolled",), "jitrop": ("jitrop_unrolled",)}
# byte arithmetic is missing on the interactive server
SUPPORTED = {
    "lev": ("interp", "interp64", "moveonly", "interactive"),
    "ssl": ("interp", "interp64", "moveonly", "interactive"),
    "relocator": ("interp", "interp64", "moveonly", "interactive"),
    "jitrop": ("interp", "interp64", "moveonly"),
}
CODE_PTR_TO_BASE = 0x4a3c
SSL_OFFSETS = (8, 16, 4, 24, 12, 0, 20, 28)
POP_RET = tuple(range(0x58, 0x60))


def script_path(name):
    return resources.files("dopc").joinpath("data", "scenarios", f"{name}.slang")


def script_source(name):
    return script_path(name).read_text()


def _u32(v):
    return (v & 0xFFFFFFFF).to_bytes(4, "little")


def _word(v, aw):
    return (v & ((1 << (8 * aw)) - 1)).to_bytes(aw, "little")


@dataclass
class ScenarioFixture:
    name: str                        # scenario family (lev, ssl, ...)
    script: str = None               # script name, defaults to ``name``
    inputs: dict = field(default_factory=dict)
    leaks: dict = field(default_factory=dict)

    @property
    def source(self):
        return script_source(self.script or self.name)

    def plant(self, target, base=0):
        """Bytes to write at region offsets before the run."""
        aw = target.addr_width
        f = self.inputs
        if self.name == "lev":
            a, b = f["s1"], f["s2"]
            buf = bytearray(0x48)
            for i, c in enumerate(a):
                buf[4 * i:4 * i + 4] = _u32(c)
            for i, c in enumerate(b):
                buf[0x20 + 4 * i:0x24 + 4 * i] = _u32(c)
            buf[0x40:0x44] = _u32(len(a))
            buf[0x44:0x48] = _u32(len(b))
            return {FIXTURE_BASE: bytes(buf)}
        if self.name == "ssl":
            objs = f["objects"]
            buf = bytearray(objs[-1] - FIXTURE_BASE + 16)
            buf[0:aw] = _word(base + objs[0], aw)
            for k, off in enumerate(SSL_OFFSETS):
                at = objs[k] - FIXTURE_BASE + off
                buf[at:at + aw] = _word(base + objs[k + 1], aw)
            buf[objs[-1] - FIXTURE_BASE:] = f["secret"]
            return {FIXTURE_BASE: bytes(buf)}
        if self.name == "relocator":
            offs = f["offsets"]
            buf = bytearray(4 + 4 * 16)
            buf[0:4] = _u32(len(offs))
            for i, o in enumerate(offs):
                buf[4 + 4 * i:8 + 4 * i] = _u32(o)
            return {FIXTURE_BASE: bytes(buf)}
        if self.name == "jitrop":
            return {FIXTURE_BASE: bytes(f["code"])}
        raise ValueError(f"unknown scenario {self.name}")

    def extract(self, b, machine, result):
        """The scenario's output read from the final target memory."""
        leaks = machine.leaks
        aw = b.target.addr_width

        def rd(name, w, k=0):
            return result.read(b.address(name, leaks) + k * w, w)

        if self.name == "lev":
            return rd("dist", 4)
        if self.name == "ssl":
            return b"".join(_u32(rd("secret", 4, k)) for k in range(4))
        if self.name == "relocator":
            return [rd("chain", aw, k) for k in range(len(self.inputs["offsets"]))]
        if self.name == "jitrop":
            n = rd("nfound", 4)
            return [rd("found", aw, k) - machine.base for k in range(n)]
        raise ValueError(self.name)


def lev_fixture(s1, s2, script="lev"):
    return ScenarioFixture("lev", script, {"s1": list(s1), "s2": list(s2)})


def ssl_fixture(seed=0, script="ssl"):
    rnd = random.Random(seed)
    objs, cur = [], FIXTURE_BASE + 0x100
    for _ in range(9):
        cur += rnd.randrange(2, 8) * 0x20
        objs.append(cur)
    secret = bytes(rnd.randrange(256) for _ in range(16))
    return ScenarioFixture("ssl", script, {"objects": objs, "secret": secret})


def relocator_fixture(offsets, code_ptr, script="relocator"):
    return ScenarioFixture("relocator", script, {"offsets": list(offsets)},
                           {"code_ptr": code_ptr})


def jitrop_code(seed=0, planted=12):
    """One kilobyte of random bytes with ``planted`` extra pop-reg; ret pairs."""
    rnd = random.Random(seed)
    code = bytearray(rnd.randrange(256) for _ in range(1024))
    for _ in range(planted):
        at = rnd.randrange(1023)
        code[at] = rnd.choice(POP_RET)
        code[at + 1] = 0xC3
    return bytes(code)


def jitrop_fixture(seed=0, script="jitrop"):
    return ScenarioFixture("jitrop", script, {"code": jitrop_code(seed)})


def default_fixture(name):
    family = name.split("_")[0]
    if family == "lev":
        return lev_fixture(b"kitten!", b"sittings", script=name)
    if family == "ssl":
        return ssl_fixture(0, script=name)
    if family == "relocator":
        return relocator_fixture([0x1000 + 0x37 * i for i in range(8)], 0x08048123, script=name)
    if family == "jitrop":
        return jitrop_fixture(0, script=name)
    raise ValueError(f"unknown scenario {name}")


@dataclass
class ScenarioResult:
    vm_output: object
    oracle_output: object
    executed_gadgets: int
    status: str
    build: object = None

    @property
    def ok(self):
        return self.vm_output == self.oracle_output


def run_scenario(fixture, target, modes=(), oracle=None, built=None, maxiter_default=None):
    """Compile, solve, drive and extract one scenario on ``target``.

    ``built`` may be a Build from an earlier call with the same script and
    target; only the plant and the run are then repeated.
    """
    if isinstance(target, str):
        target = load_target(target)
    b = built or build(fixture.source, target, modes, maxiter_default)
    leaks = dict(fixture.leaks)
    base = 0
    if target.relative:
        base = leaks.setdefault(target.relative, 0x40000000)
    plant = fixture.plant(target, base)
    m, r = drive(target, b.structure, b.protocol, leaks=leaks, fixture=plant)
    out = fixture.extract(b, m, r) if r.ok else None
    expect = oracle(fixture) if oracle is not None else None
    return ScenarioResult(out, expect, r.steps, r.status_name, b)
