from dataclasses import dataclass

KIND_WIDTHS = {"byte": 1, "int16": 2, "int32": 4, "int64": 8}
TYPE_NAMES = ("byte", "int16", "int32", "int64", "addr")
WIDTHS = (1, 2, 4, 8)


@dataclass(frozen=True)
class TypeTag:
    kind: str
    width_bytes: int

    def __post_init__(self):
        if self.kind not in TYPE_NAMES:
            raise ValueError(f"unknown type kind {self.kind!r}")
        if self.width_bytes not in WIDTHS:
            raise ValueError(f"bad width {self.width_bytes}")
        if self.kind != "addr" and KIND_WIDTHS[self.kind] != self.width_bytes:
            raise ValueError(f"{self.kind} must be {KIND_WIDTHS[self.kind]} bytes")
        if self.kind == "addr" and self.width_bytes not in (4, 8):
            raise ValueError("addr is 4 or 8 bytes")

    @property
    def bits(self):
        return self.width_bytes * 8

    @property
    def mask(self):
        return (1 << self.bits) - 1

    def __str__(self):
        return self.kind


def type_tag(kind, addr_width=4):
    if kind == "addr":
        return TypeTag("addr", addr_width)
    return TypeTag(kind, KIND_WIDTHS[kind])


def addr_type(width):
    return TypeTag("addr", width)


def mask(width):
    return (1 << (8 * width)) - 1


def width_name(width, addr_width=None):
    """Canonical declaration keyword for a byte width."""
    if addr_width is not None and width == addr_width:
        return "addr"
    return {1: "byte", 2: "int16", 4: "int32", 8: "int64"}[width]
