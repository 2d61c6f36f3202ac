"""Execution loops of the simulated targets.

The loops are written once in a numba-compatible subset of Python. With
numba available they are compiled; setting ``DOPC_DISABLE_NUMBA=1`` runs the
very same functions as plain Python over numpy arrays.

Memory is a ``uint8`` array; ``mem_base`` is the address of its first byte.
All kernels return ``(status, steps)``.
"""

import os

import numpy as np

OK = 0
FUEL = 1
BAD_ADDRESS = 2
BAD_OPCODE = 3
STOPPED = 4          # interactive: the target left its loop (NONE packet)

STATUS_NAMES = {OK: "ok", FUEL: "fuel exhausted", BAD_ADDRESS: "bad address",
                BAD_OPCODE: "bad opcode", STOPPED: "stopped"}


def _use_numba():
    if os.environ.get("DOPC_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA = _use_numba()

if NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised via the env flag in a subprocess
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

_M64 = 0xFFFFFFFFFFFFFFFF


@njit(cache=True)
def rd(mem, mem_base, addr, w):
    i = addr - mem_base
    if i < 0 or i + w > mem.shape[0]:
        return -1, False
    v = 0
    for k in range(w):
        v |= int(mem[i + k]) << (8 * k)
    return v, True


@njit(cache=True)
def wr(mem, mem_base, addr, w, v):
    i = addr - mem_base
    if i < 0 or i + w > mem.shape[0]:
        return False
    for k in range(w):
        mem[i + k] = (v >> (8 * k)) & 0xFF
    return True


@njit(cache=True)
def _mask(w):
    if w == 8:
        return -1
    return (1 << (8 * w)) - 1


@njit(cache=True)
def _uge(a, b, w):
    # unsigned a >= b for w-byte values stored in int64
    if w == 8:
        if (a < 0) != (b < 0):
            return a < 0
        return a >= b
    return (a & _mask(w)) >= (b & _mask(w))


@njit(cache=True)
def _arith(op, x, y, w):
    if op == 1:
        r = x + y
    elif op == 2:
        r = x - y
    elif op == 3:
        r = x * y
    else:
        r = 1 if _uge(x, y, w) else 0
    if w == 8:
        return r
    return r & _mask(w)


@njit(cache=True)
def interp_run(mem, mem_base, aw, slot_base, slot_size, nslots, pc_cell, fuel):
    """Resident {opcode, a, b, c} records; the counter cell is the pc.

    Opcodes: 1 add, 2 sub, 3 mul, 4 gte (unsigned), 5 mov, 6 jump-if-zero,
    7 nop, 8 mov8; 9..14 the 64-bit forms of 1..6; 0 halts.
    """
    pc = 0
    steps = 0
    while pc >= 0 and pc < nslots:
        if steps >= fuel:
            return FUEL, steps
        steps += 1
        if not wr(mem, mem_base, pc_cell, aw, pc + 1):
            return BAD_ADDRESS, steps
        rec = slot_base + pc * slot_size
        op, ok0 = rd(mem, mem_base, rec, aw)
        a, ok1 = rd(mem, mem_base, rec + aw, aw)
        b, ok2 = rd(mem, mem_base, rec + 2 * aw, aw)
        c, ok3 = rd(mem, mem_base, rec + 3 * aw, aw)
        if not (ok0 and ok1 and ok2 and ok3):
            return BAD_ADDRESS, steps
        if op == 0:
            return OK, steps
        w = 4
        base_op = op
        if op >= 9 and op <= 14:
            w = 8
            base_op = op - 8
        if base_op >= 1 and base_op <= 4:
            x, okx = rd(mem, mem_base, a, w)
            y, oky = rd(mem, mem_base, b, w)
            if not (okx and oky):
                return BAD_ADDRESS, steps
            if not wr(mem, mem_base, a, w, _arith(base_op, x, y, w)):
                return BAD_ADDRESS, steps
        elif base_op == 5 or op == 8:
            if op == 8:
                w = 1
            y, oky = rd(mem, mem_base, b, w)
            if not oky or not wr(mem, mem_base, a, w, y):
                return BAD_ADDRESS, steps
        elif base_op == 6:
            x, okx = rd(mem, mem_base, a, w)
            if not okx:
                return BAD_ADDRESS, steps
            if x == 0:
                if not wr(mem, mem_base, pc_cell, aw, c):
                    return BAD_ADDRESS, steps
        elif op == 7:
            pass
        else:
            return BAD_OPCODE, steps
        pc, okp = rd(mem, mem_base, pc_cell, aw)
        if not okp:
            return BAD_ADDRESS, steps
    return OK, steps


@njit(cache=True)
def moveonly_run(mem, packets, lengths, buf, buf_size, pc_cell, fuel):
    """One packet in the buffer at a time; the file position picks the next.

    The buffer's first word points at {kind, from, to}: 0 nop, 3 mov32,
    4 load32, 5 store32, 6 conditional inc32 (when *from == 0),
    7 mov8, 8 load8, 9 store8.
    """
    n = packets.shape[0]
    pc = 0
    steps = 0
    while pc >= 0 and pc < n:
        if steps >= fuel:
            return FUEL, steps
        steps += 1
        ln = lengths[pc]
        for k in range(buf_size):
            mem[buf + k] = packets[pc, k] if k < ln else 0
        if not wr(mem, 0, pc_cell, 4, pc + 1):
            return BAD_ADDRESS, steps
        p, ok = rd(mem, 0, buf, 4)
        kind, ok1 = rd(mem, 0, p, 4)
        src, ok2 = rd(mem, 0, p + 4, 4)
        dst, ok3 = rd(mem, 0, p + 8, 4)
        if not (ok and ok1 and ok2 and ok3):
            return BAD_ADDRESS, steps
        good = True
        if kind == 0:
            pass
        elif kind == 3 or kind == 7:
            w = 4 if kind == 3 else 1
            v, good = rd(mem, 0, src, w)
            good = good and wr(mem, 0, dst, w, v)
        elif kind == 4 or kind == 8:
            w = 4 if kind == 4 else 1
            q, good = rd(mem, 0, src, 4)
            if good:
                v, good = rd(mem, 0, q, w)
                good = good and wr(mem, 0, dst, w, v)
        elif kind == 5 or kind == 9:
            w = 4 if kind == 5 else 1
            q, good = rd(mem, 0, dst, 4)
            if good:
                v, good = rd(mem, 0, src, w)
                good = good and wr(mem, 0, q, w, v)
        elif kind == 6:
            c, good = rd(mem, 0, src, 4)
            if good and c == 0:
                v, good = rd(mem, 0, dst, 4)
                good = good and wr(mem, 0, dst, 4, (v + 1) & 0xFFFFFFFF)
        else:
            return BAD_OPCODE, steps
        if not good:
            return BAD_ADDRESS, steps
        pc, ok = rd(mem, 0, pc_cell, 4)
    return OK, steps


@njit(cache=True)
def interactive_run(mem, packets, lengths, order, buf, stream, none, fuel):
    """Deliver packets in ``order``; each runs the server loop body.

    Locals after the 64-byte buffer: type, size, srv, connect_limit, buf.
    """
    steps = 0
    for j in range(order.shape[0]):
        pk = order[j]
        ln = lengths[pk]
        for k in range(ln):
            mem[buf + k] = packets[pk, k]
        saved, ok = rd(mem, 0, buf + 80, 4)
        if not ok or saved != buf:
            return BAD_ADDRESS, steps
        while True:
            cl, ok = rd(mem, 0, buf + 76, 4)
            if cl == 0:
                break
            wr(mem, 0, buf + 76, 4, cl - 1)
            if steps >= fuel:
                return FUEL, steps
            steps += 1
            tp, ok1 = rd(mem, 0, buf + 64, 4)
            tv, ok2 = rd(mem, 0, tp, 4)
            sz, ok3 = rd(mem, 0, buf + 68, 4)
            srv, ok4 = rd(mem, 0, buf + 72, 4)
            if not (ok1 and ok2 and ok3 and ok4):
                return BAD_ADDRESS, steps
            if tv == none:
                return STOPPED, steps
            if tv == stream:
                cm, ok = rd(mem, 0, srv + 8, 4)
                v, ok5 = rd(mem, 0, cm, 4)
                if not (ok and ok5 and wr(mem, 0, sz, 4, v)):
                    return BAD_ADDRESS, steps
            else:
                if not wr(mem, 0, srv, 4, tv):
                    return BAD_ADDRESS, steps
                srv, ok = rd(mem, 0, buf + 72, 4)
                t, ok5 = rd(mem, 0, srv + 4, 4)
                v, ok6 = rd(mem, 0, sz, 4)
                if not (ok and ok5 and ok6 and wr(mem, 0, srv + 4, 4, (t + v) & 0xFFFFFFFF)):
                    return BAD_ADDRESS, steps
    return OK, steps


def run_interp(mem, mem_base, aw, slot_base, slot_size, nslots, pc_cell, fuel):
    return interp_run(mem, np.int64(mem_base), aw, np.int64(slot_base), slot_size,
                      nslots, np.int64(pc_cell), np.int64(fuel))
