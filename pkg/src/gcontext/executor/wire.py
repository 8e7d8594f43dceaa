"""Frame encoding and worker channels.

Every coordinator/worker exchange, on every transport, is a frame:

    4-byte big-endian unsigned length | 1-byte frame type | canonical-JSON body

The length covers the type byte plus the body. Canonical JSON means sorted
keys, UTF-8, no insignificant whitespace. Frame types:

    0 HELLO     worker -> coordinator; body {protocol_version, worker_id}
    1 TASK      coordinator -> worker; chunk payload
    2 RESULT    worker -> coordinator; chunk results + timing record
    3 ERROR     either direction; failure report
    4 SHUTDOWN  coordinator -> worker; empty body

All transports round-trip chunk payloads through this encoding, so results
are bit-identical regardless of where the worker runs.
"""

from __future__ import annotations

import json
import queue
import socket
import struct

from ..errors import ProtocolError

HELLO = 0
TASK = 1
RESULT = 2
ERROR = 3
SHUTDOWN = 4

PROTOCOL_VERSION = 1

_LEN = struct.Struct("!I")
MAX_FRAME = 512 * 1024 * 1024


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_frame(ftype: int, body: dict) -> bytes:
    payload = bytes([ftype]) + canonical_json(body)
    return _LEN.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> tuple[int, dict]:
    if not payload:
        raise ProtocolError("empty frame payload")
    ftype = payload[0]
    try:
        body = json.loads(payload[1:].decode("utf-8")) if len(payload) > 1 else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame body: {exc}") from exc
    return ftype, body


class ChannelClosed(Exception):
    """Peer went away; treated as a worker crash by the coordinator."""


class SocketChannel:
    """Length-prefixed frames over a TCP socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, ftype: int, body: dict) -> None:
        try:
            self._sock.sendall(encode_frame(ftype, body))
        except OSError as exc:
            raise ChannelClosed(str(exc)) from exc

    def _recvall(self, n: int) -> bytes:
        data = b""
        while len(data) < n:
            try:
                more = self._sock.recv(n - len(data))
            except socket.timeout:
                raise
            except OSError as exc:
                raise ChannelClosed(str(exc)) from exc
            if not more:
                raise ChannelClosed("connection closed")
            data += more
        return data

    def recv(self, timeout: float | None = None) -> tuple[int, dict]:
        self._sock.settimeout(timeout)
        try:
            (length,) = _LEN.unpack(self._recvall(_LEN.size))
            if length == 0 or length > MAX_FRAME:
                raise ProtocolError(f"bad frame length {length}")
            return decode_payload(self._recvall(length))
        except socket.timeout as exc:
            raise TimeoutError("recv timed out") from exc
        finally:
            try:
                self._sock.settimeout(None)
            except OSError:
                pass

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class PipeChannel:
    """Frames over a multiprocessing duplex connection."""

    def __init__(self, conn):
        self._conn = conn

    def send(self, ftype: int, body: dict) -> None:
        try:
            self._conn.send_bytes(encode_frame(ftype, body))
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise ChannelClosed(str(exc)) from exc

    def recv(self, timeout: float | None = None) -> tuple[int, dict]:
        if timeout is not None and not self._conn.poll(timeout):
            raise TimeoutError("recv timed out")
        try:
            raw = self._conn.recv_bytes()
        except (EOFError, OSError) as exc:
            raise ChannelClosed(str(exc)) from exc
        if len(raw) < _LEN.size:
            raise ProtocolError("short frame")
        (length,) = _LEN.unpack(raw[: _LEN.size])
        payload = raw[_LEN.size :]
        if length != len(payload) or length > MAX_FRAME:
            raise ProtocolError(f"bad frame length {length}")
        return decode_payload(payload)

    def close(self) -> None:
        try:
            self._conn.close()
        except OSError:
            pass


class QueueChannel:
    """Frames over a pair of in-process queues (thread workers).

    Frames are still encoded to bytes and decoded back, so in-process
    execution sees exactly the same JSON round-trip as remote execution.
    """

    _CLOSE = object()

    def __init__(self, send_q: queue.Queue, recv_q: queue.Queue):
        self._send_q = send_q
        self._recv_q = recv_q
        self._closed = False

    @classmethod
    def pair(cls) -> tuple["QueueChannel", "QueueChannel"]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b), cls(b, a)

    def send(self, ftype: int, body: dict) -> None:
        if self._closed:
            raise ChannelClosed("channel closed")
        self._send_q.put(encode_frame(ftype, body))

    def recv(self, timeout: float | None = None) -> tuple[int, dict]:
        try:
            raw = self._recv_q.get(timeout=timeout)
        except queue.Empty as exc:
            raise TimeoutError("recv timed out") from exc
        if raw is self._CLOSE:
            raise ChannelClosed("channel closed")
        (length,) = _LEN.unpack(raw[: _LEN.size])
        payload = raw[_LEN.size :]
        if length != len(payload):
            raise ProtocolError(f"bad frame length {length}")
        return decode_payload(payload)

    def close(self) -> None:
        self._closed = True
        self._recv_q.put(self._CLOSE)
        self._send_q.put(self._CLOSE)
