"""Solved structures, the ``.dopimg``/``.dopmap`` files and concretization.

``.dopimg`` layout (little endian)::

    b"DOPIMG\\x01\\x00"
    u32 data_length, u32 slot_count
    data segment bytes
    per slot: u32 block_id, u32 length, bytes

``.dopmap`` is text, one entry per line with decimal offsets into the
``.dopimg`` file::

    <offset> <width> leak(<name>)+<k>      placeholder to patch
    <offset> <length> #<instance>          region holding one instance
"""

import os
import struct
import tempfile
from dataclasses import dataclass, field

from ..errors import ConcretizeError, DopError
from .terms import Val, parse_val

MAGIC = b"DOPIMG\x01\x00"
HEADER = struct.Struct("<II")
SLOT = struct.Struct("<II")


@dataclass
class SolvedStructure:
    image: bytearray
    placeholders: list                   # (file offset, width, Val)
    regions: list                        # (file offset, length, instance id)
    data_offset: int = len(MAGIC) + HEADER.size
    data_length: int = 0
    blocks: list = field(default_factory=list)
    target: str = None
    forbidden: frozenset = frozenset()

    @property
    def slot_count(self):
        return len(self.regions)

    def data(self):
        return bytes(self.image[self.data_offset:self.data_offset + self.data_length])

    def slot(self, i):
        off, n, _ = self.regions[i]
        return bytes(self.image[off:off + n])

    def slots(self):
        return [self.slot(i) for i in range(self.slot_count)]

    def leaks(self):
        return sorted({v.leak for _, _, v in self.placeholders})

    def copy(self):
        return SolvedStructure(bytearray(self.image), list(self.placeholders), list(self.regions),
                               self.data_offset, self.data_length, list(self.blocks), self.target,
                               self.forbidden)


def assemble(data, data_holes, slot_solutions, blocks, target=None):
    """Serialize a data segment and solved slots into one image."""
    out = bytearray(MAGIC)
    out += HEADER.pack(len(data), len(slot_solutions))
    data_off = len(out)
    out += data
    holes = [(data_off + o, w, v) for o, w, v in data_holes]
    regions = []
    for i, (sol, blk) in enumerate(zip(slot_solutions, blocks)):
        out += SLOT.pack(blk, len(sol.data))
        start = len(out)
        out += sol.data
        regions.append((start, len(sol.data), i))
        holes.extend((start + o, w, v) for o, w, v in sol.holes)
    return SolvedStructure(out, holes, regions, data_off, len(data), list(blocks),
                           getattr(target, "name", None),
                           getattr(target, "forbidden_bytes", frozenset()))


def parse_image(raw):
    raw = bytearray(raw)
    if raw[:len(MAGIC)] != MAGIC:
        raise DopError("not a .dopimg file")
    dlen, nslots = HEADER.unpack_from(raw, len(MAGIC))
    pos = len(MAGIC) + HEADER.size
    data_off = pos
    pos += dlen
    regions, blocks = [], []
    for i in range(nslots):
        blk, n = SLOT.unpack_from(raw, pos)
        pos += SLOT.size
        regions.append((pos, n, i))
        blocks.append(blk)
        pos += n
    if pos != len(raw):
        raise DopError("trailing bytes in .dopimg")
    return SolvedStructure(raw, [], regions, data_off, dlen, blocks)


def format_map(s):
    lines = [f"{off} {w} {v}" for off, w, v in s.placeholders]
    lines += [f"{off} {n} #{i}" for off, n, i in s.regions]
    return "\n".join(lines) + "\n"


def parse_map(text):
    holes, regions = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        a, b, c = line.split(None, 2)
        if c.startswith("#"):
            regions.append((int(a), int(b), int(c[1:])))
        else:
            holes.append((int(a), int(b), parse_val(c)))
    return holes, regions


def load_structure(img_path, map_path=None):
    with open(img_path, "rb") as fh:
        s = parse_image(fh.read())
    map_path = map_path or os.path.splitext(img_path)[0] + ".dopmap"
    if os.path.exists(map_path):
        with open(map_path) as fh:
            holes, _ = parse_map(fh.read())
        s.placeholders = holes
    return s


def atomic_write(path, data):
    """Write via a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data if isinstance(data, (bytes, bytearray)) else data.encode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_structure(s, img_path, map_path=None):
    map_path = map_path or os.path.splitext(img_path)[0] + ".dopmap"
    atomic_write(img_path, bytes(s.image))
    atomic_write(map_path, format_map(s))


def concretize(s, leaks):
    """Patch every placeholder with its leaked value; no re-solving."""
    out = bytearray(s.image)
    forbidden = s.forbidden
    data_end = s.data_offset + s.data_length
    for off, w, v in s.placeholders:
        if v.leak not in leaks:
            raise ConcretizeError(f"no binding for leak({v.leak})")
        x = leaks[v.leak] + v.const
        if x < 0 or x >= 1 << (8 * w):
            raise ConcretizeError(f"leak({v.leak}){v.const:+d} = {x:#x} does not fit {w} bytes")
        b = x.to_bytes(w, "little")
        if forbidden and off >= data_end and any(c in forbidden for c in b):
            raise ConcretizeError(f"patched value {x:#x} contains a forbidden byte")
        out[off:off + w] = b
    return SolvedStructure(out, [], list(s.regions), s.data_offset, s.data_length, list(s.blocks),
                           s.target, s.forbidden)


def resolve(v, leaks):
    if isinstance(v, Val):
        return v.resolve(leaks)
    raise TypeError(v)
