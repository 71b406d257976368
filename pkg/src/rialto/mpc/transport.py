"""Length-prefixed frames and the two transports that carry them.

Frame layout: ``u32 big-endian length || u8 tag || payload`` where ``length``
counts the tag byte plus the payload.  Payloads are canonical JSON; byte
strings travel as hex.
"""

from __future__ import annotations

import json
import socket
import struct
from collections import deque
from enum import IntEnum
from typing import Callable, Iterator

__all__ = [
    "Tag",
    "Frame",
    "encode_frame",
    "decode_frames",
    "pack",
    "unpack",
    "InProcessTransport",
    "SocketTransport",
]

_HEADER = struct.Struct(">IB")


class Tag(IntEnum):
    SHARE = 1  # trader -> broker: opening of one share bundle
    INVOKE = 2  # engine -> broker: run an MPC phase
    INPUT = 3  # broker -> gate: private inputs for a phase
    OUTPUT = 4  # gate -> broker/engine: public outputs of a phase


class Frame:
    __slots__ = ("src", "tag", "payload")

    def __init__(self, src: str, tag: Tag, payload: bytes):
        self.src = src
        self.tag = tag
        self.payload = payload

    def body(self) -> dict:
        return unpack(self.payload)


def encode_frame(tag: int, payload: bytes) -> bytes:
    return _HEADER.pack(len(payload) + 1, int(tag)) + payload


def decode_frames(buf: bytearray) -> Iterator[tuple[Tag, bytes]]:
    """Consume complete frames from ``buf`` in place; partial tails stay put."""
    while len(buf) >= 4:
        (length,) = struct.unpack_from(">I", buf)
        if len(buf) < 4 + length:
            return
        tag = Tag(buf[4])
        payload = bytes(buf[5 : 4 + length])
        del buf[: 4 + length]
        yield tag, payload


def pack(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode()


def unpack(data: bytes):
    return json.loads(data)


class InProcessTransport:
    """Per-endpoint FIFO inboxes drained in a fixed round-robin order.

    The sender name travels beside the frame bytes, as a socket peer
    address would.
    """

    def __init__(self):
        self._handlers: dict[str, Callable[[Frame], None]] = {}
        self._order: list[str] = []
        self._inbox: dict[str, deque] = {}
        self.frames_sent = 0
        self.bytes_sent = 0

    def register(self, name: str, handler: Callable[[Frame], None]) -> None:
        if name in self._handlers:
            raise ValueError(f"endpoint {name!r} already registered")
        self._handlers[name] = handler
        self._order.append(name)
        self._inbox[name] = deque()

    def send(self, src: str, dst: str, tag: Tag, obj) -> None:
        wire = encode_frame(tag, pack(obj))
        self.frames_sent += 1
        self.bytes_sent += len(wire)
        self._enqueue(src, dst, wire)

    def _enqueue(self, src: str, dst: str, wire: bytes) -> None:
        self._inbox[dst].append((src, wire))

    def _next(self, name: str):
        q = self._inbox[name]
        return q.popleft() if q else None

    def pending(self) -> bool:
        return any(self._inbox[n] for n in self._order)

    def run(self) -> None:
        """Deliver until every inbox is empty, one frame per endpoint per sweep."""
        while self.pending():
            for name in self._order:
                item = self._next(name)
                if item is None:
                    continue
                src, wire = item
                for tag, payload in decode_frames(bytearray(wire)):
                    self._handlers[name](Frame(src, tag, payload))


class SocketTransport(InProcessTransport):
    """Same delivery discipline, but frames cross a loopback socket pair per endpoint."""

    def __init__(self):
        super().__init__()
        self._socks: dict[str, tuple[socket.socket, socket.socket]] = {}
        self._buffers: dict[str, bytearray] = {}

    def register(self, name, handler):
        super().register(name, handler)
        a, b = socket.socketpair()
        a.setblocking(False)
        b.setblocking(False)
        self._socks[name] = (a, b)
        self._buffers[name] = bytearray()

    def _enqueue(self, src, dst, wire):
        # sender name is carried as a short frame ahead of the payload frame
        data = memoryview(encode_frame(0, src.encode()) + wire)
        writer, reader = self._socks[dst]
        while data:
            try:
                data = data[writer.send(data) :]
            except BlockingIOError:
                # single-threaded: make room by pulling the far end into its buffer
                self._buffers[dst] += reader.recv(1 << 20)
        self._inbox[dst].append(None)

    def _next(self, name):
        q = self._inbox[name]
        if not q:
            return None
        q.popleft()
        buf = self._buffers[name]
        reader = self._socks[name][1]
        while True:
            src, wire = self._try_split(buf)
            if wire is not None:
                return src, wire
            buf += reader.recv(1 << 16)

    @staticmethod
    def _try_split(buf: bytearray):
        if len(buf) < 4:
            return None, None
        (n1,) = struct.unpack_from(">I", buf)
        if len(buf) < 4 + n1 + 4:
            return None, None
        (n2,) = struct.unpack_from(">I", buf, 4 + n1)
        end = 4 + n1 + 4 + n2
        if len(buf) < end:
            return None, None
        src = bytes(buf[5 : 4 + n1]).decode()
        wire = bytes(buf[4 + n1 : end])
        del buf[:end]
        return src, wire

    def close(self) -> None:
        for a, b in self._socks.values():
            a.close()
            b.close()
