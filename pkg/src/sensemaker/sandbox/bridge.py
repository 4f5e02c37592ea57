"""Loopback bridge giving sandboxed programs access to registered helpers.

Wire protocol, both directions: a 4-byte big-endian unsigned length followed
by that many bytes of UTF-8 JSON. Guest -> host frames are
``{"helper": name, "args": {...}}``; host -> guest frames are
``{"ok": true, "value": ...}`` or ``{"ok": false, "error": message}``.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..helpers import HelperRegistry

MAX_FRAME_BYTES = 8 * 1024 * 1024


class BridgeProtocolError(Exception):
    pass


def write_frame(sock: socket.socket, obj) -> None:
    blob = json.dumps(obj).encode("utf-8")
    if len(blob) > MAX_FRAME_BYTES:
        raise BridgeProtocolError(f"frame of {len(blob)} bytes exceeds cap")
    sock.sendall(struct.pack(">I", len(blob)) + blob)


def read_frame(sock: socket.socket) -> Optional[dict]:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise BridgeProtocolError(f"frame of {length} bytes exceeds cap")
    body = _read_exact(sock, length)
    if body is None:
        raise BridgeProtocolError("connection closed mid-frame")
    return json.loads(body.decode("utf-8"))


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        part = sock.recv(n - len(chunks))
        if not part:
            if chunks:
                raise BridgeProtocolError("connection closed mid-frame")
            return None
        chunks += part
    return chunks


@dataclass
class BridgeCall:
    helper: str
    args: dict
    ok: bool
    error: Optional[str] = None


@dataclass
class BridgeSession:
    """One execution's view of the bridge: allowed helpers plus the call log."""

    registry: HelperRegistry
    allowed: Optional[frozenset[str]] = None  # None = every registered helper
    calls: list[BridgeCall] = field(default_factory=list)

    def dispatch(self, frame: dict) -> dict:
        name = frame.get("helper")
        args = frame.get("args") or {}
        if not isinstance(name, str) or not isinstance(args, dict):
            return {"ok": False, "error": "malformed bridge frame"}
        if name not in self.registry or (self.allowed is not None and name not in self.allowed):
            self.calls.append(BridgeCall(name, args, False, "unregistered helper"))
            return {"ok": False, "error": f"unregistered helper {name!r}"}
        try:
            value = self.registry.call(name, **args)
            json.dumps(value)  # helper results must be JSON-serializable
        except Exception as exc:  # surfaced into the guest as a program error
            self.calls.append(BridgeCall(name, args, False, str(exc)))
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        self.calls.append(BridgeCall(name, args, True))
        return {"ok": True, "value": value}


class BridgeServer:
    """Accepts guest connections for a single execution and serves helper calls."""

    def __init__(self, registry: HelperRegistry,
                 allowed: Optional[Iterable[str]] = None,
                 host: str = "127.0.0.1"):
        self.session = BridgeSession(registry,
                                     None if allowed is None else frozenset(allowed))
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, 0))
        self._sock.listen(4)
        self._sock.settimeout(0.2)
        self.host, self.port = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    @property
    def calls(self) -> list[BridgeCall]:
        return self.session.calls

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        with conn:
            conn.settimeout(None)
            while True:
                try:
                    frame = read_frame(conn)
                except (BridgeProtocolError, OSError, json.JSONDecodeError):
                    return
                if frame is None:
                    return
                try:
                    write_frame(conn, self.session.dispatch(frame))
                except OSError:
                    return

    def close(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._thread.join(timeout=1.0)

    def __enter__(self) -> "BridgeServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
