"""Target descriptors: ``key = value`` files describing one simulated instance."""

import os
from dataclasses import dataclass, field
from importlib import resources

from ..builder.terms import Val
from ..errors import TargetError

MODES = ("non-interactive", "movement-only", "interactive")


@dataclass(frozen=True)
class Anchor:
    name: str
    slot_offset: int = None      # inside the instance buffer
    address: Val = None          # fixed location outside it

    @property
    def in_slot(self):
        return self.slot_offset is not None


@dataclass
class TargetDescriptor:
    name: str
    mode: str
    vm: str
    addr_width: int
    memory_size: int
    slot_base: int
    slot_size: int
    resident: bool
    data_base: int
    data_size: int
    const_pool: bool
    anchors: dict
    natives: tuple
    forbidden_bytes: frozenset = frozenset()
    scratch: tuple = None        # (base, size)
    scratch_gap: int = 8
    fixture: tuple = None        # (base, size)
    relative: str = None         # leak naming the region base, if addresses are relative
    max_packet: int = None
    directory: str = None
    extra: dict = field(default_factory=dict)

    def addr(self, offset):
        """Absolute address inside the target's region as a Val."""
        return Val(offset, self.relative)

    def slot_addr(self, index):
        if self.resident:
            return self.addr(self.slot_base + index * self.slot_size)
        return self.addr(self.slot_base)

    @property
    def interactive(self):
        return self.mode == "interactive"

    @property
    def native_sigs(self):
        from ..asm.parser import split_mnemonic

        return frozenset(split_mnemonic(n) for n in self.natives)

    def path(self, name):
        return os.path.join(self.directory, name)

    def recipe_paths(self):
        base = str(resources.files("dopc").joinpath("data", "recipes", "reusable.recipe"))
        app = self.path("app.recipe")
        return [base] + ([app] if os.path.exists(app) else [])

    def anchor_names(self):
        return set(self.anchors)


def _int(v):
    return int(v, 0)


def _bool(v):
    return v.strip().lower() in ("1", "true", "yes")


def _range(v):
    if not v.strip():
        return None
    a, b = v.split(":")
    return (_int(a), _int(b))


def parse_descriptor(text, directory=None):
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TargetError(f"descriptor line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    required = ["name", "mode", "vm", "addr_width", "memory_size", "slot_base", "slot_size", "natives"]
    for k in required:
        if k not in kv:
            raise TargetError(f"descriptor missing {k!r}")
    if kv["mode"] not in MODES:
        raise TargetError(f"unknown mode {kv['mode']!r}")
    relative = kv.get("relative") or None
    anchors = {}
    for item in kv.get("anchors", "").split(","):
        item = item.strip()
        if not item:
            continue
        name, loc = item.split(":", 1)
        if loc.startswith("slot+"):
            anchors[name] = Anchor(name, slot_offset=_int(loc[5:]))
        else:
            anchors[name] = Anchor(name, address=Val(_int(loc), relative))
    known = set(required) | {"anchors", "resident", "data_base", "data_size", "const_pool",
                             "forbidden_bytes", "scratch", "scratch_gap", "fixture", "relative",
                             "max_packet"}
    return TargetDescriptor(
        name=kv["name"],
        mode=kv["mode"],
        vm=kv["vm"],
        addr_width=_int(kv["addr_width"]),
        memory_size=_int(kv["memory_size"]),
        slot_base=_int(kv["slot_base"]),
        slot_size=_int(kv["slot_size"]),
        resident=_bool(kv.get("resident", "false")),
        data_base=_int(kv.get("data_base", "0")),
        data_size=_int(kv.get("data_size", "0")),
        const_pool=_bool(kv.get("const_pool", "false")),
        anchors=anchors,
        natives=tuple(kv["natives"].split()),
        forbidden_bytes=frozenset(_int(b) for b in kv.get("forbidden_bytes", "").split()),
        scratch=_range(kv.get("scratch", "")),
        scratch_gap=_int(kv.get("scratch_gap", "8")),
        fixture=_range(kv.get("fixture", "")),
        relative=relative,
        max_packet=_int(kv["max_packet"]) if "max_packet" in kv else None,
        directory=directory,
        extra={k: v for k, v in kv.items() if k not in known},
    )


TARGETS = ("interp", "interp64", "moveonly", "interactive")


def target_dir(name):
    return str(resources.files("dopc").joinpath("data", "targets", name))


def load_target(name_or_path):
    """Load a shipped target by name, or a descriptor directory/file path."""
    if os.path.isdir(name_or_path):
        d = name_or_path
    elif os.path.isfile(name_or_path):
        d = os.path.dirname(name_or_path)
    else:
        d = target_dir(name_or_path)
        if not os.path.isdir(d):
            raise TargetError(f"unknown target {name_or_path!r}")
    path = os.path.join(d, "target.desc") if os.path.isdir(d) and not os.path.isfile(name_or_path) else name_or_path
    with open(path) as fh:
        return parse_descriptor(fh.read(), d)
