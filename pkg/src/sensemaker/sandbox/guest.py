"""Self-contained runner executed inside the sandbox.

The source below is written into the sandbox scratch directory and run with
a fresh interpreter (`python -I`). It connects to the helper bridge, exposes
helper proxies plus `emit_result`, installs an audit-hook guard (no new
network connections, filesystem confined to the scratch directory with
read-only access to the stdlib, no subprocesses), then executes the
generated program.
"""

RESULT_BEGIN = "<<<RESULT>>>"
RESULT_END = "<<<END RESULT>>>"

GUEST_RUNNER_SOURCE = r'''
import bisect
import collections
import datetime
import functools
import heapq
import itertools
import json
import math
import os
import random
import re
import socket
import statistics
import struct
import sys
import time

RESULT_BEGIN = "<<<RESULT>>>"
RESULT_END = "<<<END RESULT>>>"

BRIDGE_HOST = os.environ["SANDBOX_BRIDGE_HOST"]
BRIDGE_PORT = int(os.environ["SANDBOX_BRIDGE_PORT"])
HELPER_NAMES = json.loads(os.environ.get("SANDBOX_HELPERS", "[]"))
SANDBOX_DIR = os.path.realpath(os.environ["SANDBOX_DIR"])
PROGRAM_PATH = os.environ["SANDBOX_PROGRAM"]


class HelperCallError(RuntimeError):
    pass


_bridge = socket.create_connection((BRIDGE_HOST, BRIDGE_PORT), timeout=30)


def _write_frame(obj):
    blob = json.dumps(obj).encode("utf-8")
    _bridge.sendall(struct.pack(">I", len(blob)) + blob)


def _read_exact(n):
    chunks = b""
    while len(chunks) < n:
        part = _bridge.recv(n - len(chunks))
        if not part:
            raise HelperCallError("bridge connection closed")
        chunks += part
    return chunks


def _read_frame():
    (length,) = struct.unpack(">I", _read_exact(4))
    return json.loads(_read_exact(length).decode("utf-8"))


def call_helper(name, **args):
    """Invoke a registered helper on the host and return its value."""
    _write_frame({"helper": name, "args": args})
    reply = _read_frame()
    if not reply.get("ok"):
        raise HelperCallError(reply.get("error", "helper call failed"))
    return reply["value"]


def _make_proxy(name):
    def proxy(**args):
        return call_helper(name, **args)
    proxy.__name__ = name
    return proxy


def emit_result(value):
    """Print the final structured result in the sentinel block the host parses."""
    blob = json.dumps(value)
    sys.stdout.write("\n" + RESULT_BEGIN + "\n" + blob + "\n" + RESULT_END + "\n")
    sys.stdout.flush()


with open(PROGRAM_PATH, "r", encoding="utf-8") as fh:
    _program_source = fh.read()

_STDLIB_DIR = os.path.realpath(os.path.dirname(os.__file__))
_READ_PREFIXES = (SANDBOX_DIR, _STDLIB_DIR)
_WRITE_PREFIXES = (SANDBOX_DIR,)
_BLOCKED_EVENTS = frozenset({
    "socket.connect", "socket.connect_ex", "socket.bind", "socket.sendto",
    "socket.getaddrinfo", "socket.gethostbyname", "socket.sethostname",
    "subprocess.Popen", "os.system", "os.posix_spawn", "os.spawn",
    "os.fork", "os.forkpty", "os.exec", "pty.spawn",
})
_BLOCKED_IMPORTS = frozenset({
    "ctypes", "_ctypes", "subprocess", "_posixsubprocess",
    "multiprocessing", "_multiprocessing",
})
_PATH_EVENTS = frozenset({
    "open", "os.scandir", "os.listdir", "os.remove", "os.rename", "os.rmdir",
    "os.mkdir", "os.chmod", "os.truncate", "os.link", "os.symlink",
    "os.utime", "shutil.rmtree", "shutil.move", "shutil.copyfile",
})
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_TRUNC | os.O_APPEND


def _under(path, prefixes):
    try:
        real = os.path.realpath(os.fsdecode(os.fspath(path)))
    except (TypeError, ValueError):
        return False
    return any(real == p or real.startswith(p + os.sep) for p in prefixes)


def _guard(event, args):
    if event in _BLOCKED_EVENTS:
        raise RuntimeError("sandbox: blocked " + event)
    if event == "import":
        module = args[0] or ""
        if module in _BLOCKED_IMPORTS or module.split(".")[0] in _BLOCKED_IMPORTS:
            raise RuntimeError("sandbox: blocked import of " + module)
        return
    if event in _PATH_EVENTS:
        writing = event != "open" or _open_writes(args)
        for arg in args:
            if arg is None or isinstance(arg, int):
                continue
            if not isinstance(arg, (str, bytes, os.PathLike)):
                continue
            allowed = _WRITE_PREFIXES if writing else _READ_PREFIXES
            if not _under(arg, allowed):
                raise RuntimeError("sandbox: blocked %s of %r" % (event, arg))


def _open_writes(args):
    path, mode, flags = (list(args) + [None, None, None])[:3]
    if isinstance(mode, str):
        return any(ch in mode for ch in "wax+")
    if isinstance(flags, int):
        return bool(flags & _WRITE_FLAGS)
    return False


sys.addaudithook(_guard)

_globals = {
    "__name__": "__main__",
    "__builtins__": __builtins__,
    "call_helper": call_helper,
    "emit_result": emit_result,
    "HelperCallError": HelperCallError,
    "json": json, "math": math, "statistics": statistics,
    "datetime": datetime, "re": re, "collections": collections,
    "itertools": itertools, "functools": functools, "heapq": heapq,
    "bisect": bisect, "random": random, "time": time, "socket": socket,
    "os": os, "sys": sys,
}
for _name in HELPER_NAMES:
    _globals[_name] = _make_proxy(_name)

try:
    exec(compile(_program_source, PROGRAM_PATH, "exec"), _globals)
except SystemExit as exc:
    sys.exit(exc.code if isinstance(exc.code, int) else 0 if exc.code is None else 1)
except BaseException:
    import traceback
    traceback.print_exc()
    sys.stdout.flush()
    sys.exit(1)
sys.stdout.flush()
'''
