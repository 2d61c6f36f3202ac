"""Packet transport between the driver and a target instance.

Frames are length-prefixed byte strings. The default transport is an
in-process buffer; ``PacketChannel(socket=True)`` moves the same byte
stream through a localhost TCP connection instead.
"""

import queue
import socket as _socket
import struct
import threading
from collections import deque

from ..builder.image import MAGIC, HEADER, SLOT, parse_image
from ..errors import VmError

_LEN = struct.Struct("<I")


def _recv_exact(sock, n):
    out = bytearray()
    while len(out) < n:
        chunk = sock.recv(n - len(out))
        if not chunk:
            raise VmError("packet channel closed mid-frame")
        out += chunk
    return bytes(out)


class PacketChannel:
    """Single-producer, single-consumer frame channel."""

    def __init__(self, socket=False, timeout=10.0):
        self.timeout = timeout
        self.sent = 0
        self._closed = False
        if not socket:
            self._buf = deque()
            self._sock = None
            return
        srv = _socket.create_server(("127.0.0.1", 0))
        port = srv.getsockname()[1]
        self._frames = queue.Queue()
        self._out = _socket.create_connection(("127.0.0.1", port), timeout=timeout)
        conn, _ = srv.accept()
        srv.close()
        conn.settimeout(timeout)
        self._sock = conn
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        try:
            while True:
                head = self._sock.recv(_LEN.size, _socket.MSG_WAITALL)
                if len(head) < _LEN.size:
                    break
                (n,) = _LEN.unpack(head)
                self._frames.put(_recv_exact(self._sock, n) if n else b"")
        except OSError:
            pass
        finally:
            self._frames.put(None)

    def send(self, frame):
        frame = bytes(frame)
        if self._closed:
            raise VmError("send on a closed packet channel")
        self.sent += 1
        if self._sock is None:
            self._buf.append(frame)
        else:
            self._out.sendall(_LEN.pack(len(frame)) + frame)

    def recv(self):
        if self._sock is None:
            if not self._buf:
                raise VmError("packet channel is empty")
            return self._buf.popleft()
        try:
            frame = self._frames.get(timeout=self.timeout)
        except queue.Empty:
            raise VmError("packet channel timed out") from None
        if frame is None:
            raise VmError("packet channel closed")
        return frame

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self._sock is not None:
            self._out.close()
            self._reader.join(self.timeout)
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def transfer(self, structure):
        """Send a structure as header, data and one frame per packet; rebuild it on the far side."""
        n = structure.slot_count
        self.send(HEADER.pack(structure.data_length, n))
        self.send(structure.data())
        for i in range(n):
            self.send(SLOT.pack(structure.blocks[i], len(structure.slot(i))) + structure.slot(i))
        dlen, count = HEADER.unpack(self.recv())
        raw = bytearray(MAGIC) + HEADER.pack(dlen, count) + self.recv()
        for _ in range(count):
            raw += self.recv()
        out = parse_image(raw)
        if bytes(out.image) != bytes(structure.image):
            raise VmError("structure changed in transit")
        out.placeholders = list(structure.placeholders)
        out.target = structure.target
        out.forbidden = structure.forbidden
        return out
