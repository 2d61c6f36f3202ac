"""Deliver solved structures to a target instance."""

import numpy as np

from ..errors import VmError
from ..transforms.protocol import expand_protocol, parse_protocol
from .machines import DEFAULT_FUEL, Machine


def packet_order(blocks, trace):
    """Packet indices: the setup packets (block 0) once, then each block of the trace."""
    blocks = np.asarray(blocks, dtype=np.int64)
    groups = {}
    for i, b in enumerate(blocks.tolist()):
        groups.setdefault(b, []).append(i)
    parts = [np.asarray(groups.get(0, []), dtype=np.int64)]
    cache = {b: np.asarray(ix, dtype=np.int64) for b, ix in groups.items()}
    empty = np.zeros(0, dtype=np.int64)
    for b in trace:
        parts.append(cache.get(b, empty))
    return np.concatenate(parts) if parts else empty


def drive(target, structure, protocol=None, leaks=None, fixture=None, fuel=DEFAULT_FUEL,
          trace=None, channel=None, strict=False):
    """Run ``structure`` on a fresh instance of ``target``.

    Interactive targets need a protocol (or an explicit block ``trace``);
    the packets of each block are sent in trace order. ``channel`` may be a
    PacketChannel that carries the packets before they reach the target.
    With ``strict`` every placeholder must be bound by ``leaks``.
    """
    m = Machine(target, leaks, fixture, strict)
    order = None
    if target.interactive:
        if trace is None:
            if protocol is None:
                raise VmError("interactive targets need a protocol")
            if isinstance(protocol, str):
                protocol = parse_protocol(protocol)
            trace = expand_protocol(protocol)
        order = packet_order(structure.blocks, trace)
    if channel is not None:
        structure = channel.transfer(structure)
    return m, m.run(structure, fuel, order)
