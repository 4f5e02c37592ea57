"""Isolated execution of agent-generated programs with bridged helper access.

Two interchangeable backends:

- SubprocessSandbox: a fresh `python -I` process with an audit-hook guard
  (no new network connections, filesystem confined to a scratch directory
  with read-only stdlib, no subprocesses). Suitable for CI without a
  container runtime.
- DockerSandbox: the same runner inside a container attached to an internal
  (no-egress) network, reaching the helper bridge through the network
  gateway.

Programs report their final value by calling ``emit_result(value)``, which
prints a sentinel-delimited JSON block the host parses into
``ExecutionResult.result_value``.
"""

from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..helpers import HelperRegistry
from .bridge import BridgeCall, BridgeServer
from .guest import GUEST_RUNNER_SOURCE, RESULT_BEGIN, RESULT_END

__all__ = [
    "ExecutionLimits", "ExecutionRequest", "ExecutionResult",
    "SandboxError", "SandboxUnavailableError", "SubprocessSandbox",
    "DockerSandbox", "create_sandbox", "docker_available",
]


class SandboxError(Exception):
    pass


class SandboxUnavailableError(SandboxError):
    pass


@dataclass(frozen=True)
class ExecutionLimits:
    wall_clock: float = 60.0
    output_bytes: int = 262_144

    def __post_init__(self):
        if self.wall_clock <= 0 or self.output_bytes <= 0:
            raise ValueError("limits must be positive")


@dataclass
class ExecutionRequest:
    program: str
    limits: ExecutionLimits = field(default_factory=ExecutionLimits)
    language: str = "python"
    allowed_helpers: Optional[frozenset[str]] = None  # None = all registered

    def __post_init__(self):
        if not self.program.strip():
            raise ValueError("program must be non-empty")


@dataclass
class ExecutionResult:
    exit_status: int
    stdout: str
    stderr: str
    duration: float
    result_value: object = None
    has_result: bool = False
    timed_out: bool = False
    helper_calls: list[BridgeCall] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.exit_status == 0 and not self.timed_out

    def error_text(self) -> str:
        """Condensed failure description fed back into the code-repair prompt."""
        if self.timed_out:
            return f"execution timed out after {self.duration:.1f}s"
        tail = self.stderr.strip().splitlines()[-12:]
        return "\n".join(tail) if tail else f"exit status {self.exit_status}"


def parse_result_block(stdout: str):
    """Extract the last sentinel-delimited JSON value; (found, value)."""
    begin = stdout.rfind(RESULT_BEGIN)
    if begin < 0:
        return False, None
    end = stdout.find(RESULT_END, begin)
    if end < 0:
        return False, None
    blob = stdout[begin + len(RESULT_BEGIN):end].strip()
    try:
        return True, json.loads(blob)
    except json.JSONDecodeError:
        return False, None


def _truncate(text: str, cap: int) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + f"\n...[truncated at {cap} bytes]"


class _BaseSandbox:
    """Shared scratch-dir + bridge + result plumbing for both backends."""

    def execute(self, request: ExecutionRequest, registry: HelperRegistry) -> ExecutionResult:
        if request.language != "python":
            raise SandboxError(f"unsupported guest language {request.language!r}")
        scratch = Path(tempfile.mkdtemp(prefix="sandbox-"))
        try:
            program_path = scratch / "program.py"
            runner_path = scratch / "runner.py"
            program_path.write_text(request.program)
            runner_path.write_text(GUEST_RUNNER_SOURCE)
            with BridgeServer(registry, request.allowed_helpers,
                              host=self._bridge_host()) as bridge:
                started = time.monotonic()
                proc, cleanup = self._launch(scratch, bridge)
                timed_out = False
                try:
                    stdout, stderr = proc.communicate(timeout=request.limits.wall_clock)
                except subprocess.TimeoutExpired:
                    timed_out = True
                    self._kill(proc, cleanup)
                    stdout, stderr = proc.communicate()
                duration = time.monotonic() - started
                cleanup()
                cap = request.limits.output_bytes
                stdout = _truncate(stdout or "", cap)
                stderr = _truncate(stderr or "", cap)
                result = ExecutionResult(
                    exit_status=proc.returncode if not timed_out else -1,
                    stdout=stdout, stderr=stderr, duration=duration,
                    timed_out=timed_out, helper_calls=list(bridge.calls))
                if result.ok:
                    found, value = parse_result_block(stdout)
                    result.has_result = found
                    result.result_value = value
                return result
        finally:
            shutil.rmtree(scratch, ignore_errors=True)

    # backend hooks -------------------------------------------------------

    def _bridge_host(self) -> str:
        return "127.0.0.1"

    def _launch(self, scratch: Path, bridge: BridgeServer):
        raise NotImplementedError

    def _kill(self, proc: subprocess.Popen, cleanup) -> None:
        raise NotImplementedError


class SubprocessSandbox(_BaseSandbox):
    """Restricted subprocess backend (audit-hook guard, fresh interpreter)."""

    name = "subprocess"

    def _launch(self, scratch: Path, bridge: BridgeServer):
        allowed = bridge.session.allowed
        helper_names = sorted(allowed) if allowed is not None \
            else bridge.session.registry.names()
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "PYTHONUNBUFFERED": "1",
            "TMPDIR": str(scratch),
            "SANDBOX_BRIDGE_HOST": bridge.host,
            "SANDBOX_BRIDGE_PORT": str(bridge.port),
            "SANDBOX_HELPERS": json.dumps(helper_names),
            "SANDBOX_DIR": str(scratch),
            "SANDBOX_PROGRAM": str(scratch / "program.py"),
        }
        proc = subprocess.Popen(
            [sys.executable, "-I", str(scratch / "runner.py")],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
            cwd=scratch, env=env, start_new_session=True)
        return proc, (lambda: None)

    def _kill(self, proc: subprocess.Popen, cleanup) -> None:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()


def docker_available(docker_bin: str = "docker") -> bool:
    if shutil.which(docker_bin) is None:
        return False
    try:
        probe = subprocess.run([docker_bin, "version", "--format", "{{.Server.Version}}"],
                               capture_output=True, timeout=10)
    except (OSError, subprocess.TimeoutExpired):
        return False
    return probe.returncode == 0


class DockerSandbox(_BaseSandbox):
    """Container backend on an internal network: bridge reachable, no egress."""

    name = "docker"
    NETWORK = "sensemaker-sandbox"

    def __init__(self, image: str = "python:3.11-slim", docker_bin: str = "docker"):
        if not docker_available(docker_bin):
            raise SandboxUnavailableError("docker runtime is not available")
        self.image = image
        self.docker_bin = docker_bin
        self._gateway = self._ensure_network()
        self._container: Optional[str] = None

    def _ensure_network(self) -> str:
        inspect = subprocess.run(
            [self.docker_bin, "network", "inspect", self.NETWORK,
             "--format", "{{(index .IPAM.Config 0).Gateway}}"],
            capture_output=True, text=True)
        if inspect.returncode != 0:
            create = subprocess.run(
                [self.docker_bin, "network", "create", "--internal", self.NETWORK],
                capture_output=True, text=True)
            if create.returncode != 0:
                raise SandboxUnavailableError(
                    f"cannot create internal network: {create.stderr.strip()}")
            inspect = subprocess.run(
                [self.docker_bin, "network", "inspect", self.NETWORK,
                 "--format", "{{(index .IPAM.Config 0).Gateway}}"],
                capture_output=True, text=True)
        gateway = inspect.stdout.strip()
        if not gateway:
            raise SandboxUnavailableError("internal network has no gateway address")
        return gateway

    def _bridge_host(self) -> str:
        return "0.0.0.0"

    def _launch(self, scratch: Path, bridge: BridgeServer):
        allowed = bridge.session.allowed
        helper_names = sorted(allowed) if allowed is not None \
            else bridge.session.registry.names()
        name = f"sensemaker-exec-{uuid.uuid4().hex[:12]}"
        self._container = name
        cmd = [
            self.docker_bin, "run", "--rm", "--name", name,
            "--network", self.NETWORK,
            "--memory", "512m", "--pids-limit", "64",
            "--cap-drop", "ALL", "--security-opt", "no-new-privileges",
            "-v", f"{scratch}:/work",
            "-w", "/work",
            "-e", f"SANDBOX_BRIDGE_HOST={self._gateway}",
            "-e", f"SANDBOX_BRIDGE_PORT={bridge.port}",
            "-e", f"SANDBOX_HELPERS={json.dumps(helper_names)}",
            "-e", "SANDBOX_DIR=/work",
            "-e", "SANDBOX_PROGRAM=/work/program.py",
            "-e", "PYTHONUNBUFFERED=1",
            self.image, "python", "-I", "/work/runner.py",
        ]
        proc = subprocess.Popen(cmd, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE, text=True)

        def cleanup():
            self._container = None

        return proc, cleanup

    def _kill(self, proc: subprocess.Popen, cleanup) -> None:
        if self._container:
            subprocess.run([self.docker_bin, "kill", self._container],
                           capture_output=True)
        proc.kill()


def create_sandbox(kind: str = "subprocess"):
    if kind == "subprocess":
        return SubprocessSandbox()
    if kind == "docker":
        return DockerSandbox()
    raise ValueError(f"unknown sandbox backend {kind!r}")
