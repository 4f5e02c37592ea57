"""Sandbox backends: result contract, isolation probes, limits, bridge protocol."""

import json
import socket
import struct
import threading

import pytest

from sensemaker.helpers import HelperRegistry, HelperParam, HelperSpec
from sensemaker.sandbox import (
    DockerSandbox,
    ExecutionLimits,
    ExecutionRequest,
    SubprocessSandbox,
    docker_available,
)
from sensemaker.sandbox.bridge import BridgeServer, read_frame, write_frame
from sensemaker.streams import StreamKind

NETWORK_PROBE = """
try:
    socket.create_connection(("203.0.113.1", 80), timeout=3)
    emit_result("escaped")
except Exception as exc:
    raise SystemExit(17)
"""

HOST_FS_PROBE = """
data = open("/etc/passwd").read()
emit_result(len(data))
"""

UNREGISTERED_HELPER_PROBE = """
emit_result(call_helper("definitely_not_registered"))
"""

PROBES = {
    "network-egress": NETWORK_PROBE,
    "host-filesystem-read": HOST_FS_PROBE,
    "unregistered-helper-call": UNREGISTERED_HELPER_PROBE,
}


def make_registry():
    registry = HelperRegistry()
    registry.register(
        HelperSpec("double_value", "Doubles a number.",
                   (HelperParam("x", "number", "Value to double."),),
                   "The doubled number.", ("4",),
                   frozenset({StreamKind.WIFI})),
        lambda x: x * 2)
    return registry


@pytest.fixture(scope="module")
def registry():
    return make_registry()


@pytest.fixture(scope="module")
def sandbox():
    return SubprocessSandbox()


class TestResultContract:
    def test_simple_result_roundtrip(self, sandbox, registry):
        result = sandbox.execute(ExecutionRequest(program="emit_result(2 + 2)"),
                                 registry)
        assert result.ok and result.has_result
        assert result.result_value == 4

    def test_structured_result(self, sandbox, registry):
        program = 'emit_result({"rows": [1, 2, 3], "note": "ok"})'
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert result.result_value == {"rows": [1, 2, 3], "note": "ok"}

    def test_last_result_block_wins(self, sandbox, registry):
        program = "emit_result(1)\nemit_result(2)"
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert result.result_value == 2

    def test_no_result_block_flagged(self, sandbox, registry):
        result = sandbox.execute(ExecutionRequest(program="x = 1"), registry)
        assert result.ok and not result.has_result

    def test_result_never_set_on_failure(self, sandbox, registry):
        program = "emit_result(1)\nraise RuntimeError('after result')"
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert not result.ok
        assert result.result_value is None and not result.has_result

    def test_helper_call_from_program(self, sandbox, registry):
        program = "emit_result(double_value(x=21))"
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert result.result_value == 42

    def test_helper_calls_are_logged(self, sandbox, registry):
        program = "double_value(x=1)\ndouble_value(x=2)\nemit_result('done')"
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert [(c.helper, c.args) for c in result.helper_calls] == [
            ("double_value", {"x": 1}), ("double_value", {"x": 2})]

    def test_stderr_preserved_for_retry_prompt(self, sandbox, registry):
        result = sandbox.execute(
            ExecutionRequest(program="raise ValueError('broken logic')"), registry)
        assert not result.ok
        assert "broken logic" in result.stderr
        assert "broken logic" in result.error_text()

    def test_unsupported_language_rejected(self, sandbox, registry):
        from sensemaker.sandbox import SandboxError
        with pytest.raises(SandboxError):
            sandbox.execute(ExecutionRequest(program="echo hi", language="bash"),
                            registry)


class TestIsolationProbes:
    @pytest.mark.parametrize("probe_name", sorted(PROBES))
    def test_probe_fails_on_subprocess_backend(self, sandbox, registry, probe_name):
        result = sandbox.execute(ExecutionRequest(program=PROBES[probe_name]),
                                 registry)
        assert not result.ok, f"probe {probe_name} escaped the sandbox"
        assert result.result_value is None

    def test_write_outside_sandbox_blocked(self, sandbox, registry, tmp_path):
        target = tmp_path / "escape.txt"
        program = f'open("{target}", "w").write("x")\nemit_result("wrote")'
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert not result.ok
        assert not target.exists()

    def test_subprocess_spawn_blocked(self, sandbox, registry):
        program = ('import subprocess\n'
                   'subprocess.run(["echo", "hi"])\nemit_result("spawned")')
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert not result.ok

    def test_write_inside_sandbox_allowed(self, sandbox, registry):
        program = ('open("notes.txt", "w").write("local")\n'
                   'emit_result(open("notes.txt").read())')
        result = sandbox.execute(ExecutionRequest(program=program), registry)
        assert result.ok and result.result_value == "local"

    def test_helper_outside_session_allowlist_rejected(self, sandbox):
        registry = make_registry()
        registry.register(
            HelperSpec("hidden_helper", "Hidden.",
                       (HelperParam("x", "number", "Input."),),
                       "x", ("1",), frozenset({StreamKind.WIFI})),
            lambda x: x)
        request = ExecutionRequest(program="emit_result(call_helper('hidden_helper', x=1))",
                                   allowed_helpers=frozenset({"double_value"}))
        result = sandbox.execute(request, registry)
        assert not result.ok
        assert "unregistered helper" in result.stderr


class TestLimits:
    def test_timeout_enforced_within_one_second(self, sandbox, registry):
        request = ExecutionRequest(program="while True:\n    pass",
                                   limits=ExecutionLimits(wall_clock=1.5))
        result = sandbox.execute(request, registry)
        assert result.timed_out and not result.ok
        assert result.duration == pytest.approx(1.5, abs=1.0)
        assert "timed out" in result.error_text()

    def test_output_truncated_at_cap(self, sandbox, registry):
        request = ExecutionRequest(
            program="print('x' * 100000)\nemit_result('done')",
            limits=ExecutionLimits(wall_clock=30, output_bytes=5000))
        result = sandbox.execute(request, registry)
        assert len(result.stdout) < 6000
        assert "truncated" in result.stdout

    def test_nonpositive_limits_rejected(self):
        with pytest.raises(ValueError):
            ExecutionLimits(wall_clock=0)

    def test_empty_program_rejected(self):
        with pytest.raises(ValueError):
            ExecutionRequest(program="   ")


class TestBridgeProtocol:
    def test_frame_roundtrip_over_socket(self, registry):
        with BridgeServer(registry) as server:
            conn = socket.create_connection((server.host, server.port))
            write_frame(conn, {"helper": "double_value", "args": {"x": 5}})
            reply = read_frame(conn)
            assert reply == {"ok": True, "value": 10}
            write_frame(conn, {"helper": "nope", "args": {}})
            assert read_frame(conn)["ok"] is False
            conn.close()
        assert [c.ok for c in server.calls] == [True, False]

    def test_length_prefix_layout(self):
        # 4-byte big-endian length, then UTF-8 JSON
        received = []
        a, b = socket.socketpair()
        write_frame(a, {"k": 1})
        header = b.recv(4)
        (length,) = struct.unpack(">I", header)
        body = b.recv(length)
        assert json.loads(body) == {"k": 1}
        a.close(); b.close()

    def test_helper_exception_becomes_error_frame(self):
        registry = HelperRegistry()
        registry.register(
            HelperSpec("exploder", "Raises.",
                       (HelperParam("x", "number", "Ignored."),),
                       "Never returns.", ("-",), frozenset({StreamKind.WIFI})),
            lambda x: 1 / 0)
        with BridgeServer(registry) as server:
            conn = socket.create_connection((server.host, server.port))
            write_frame(conn, {"helper": "exploder", "args": {"x": 1}})
            reply = read_frame(conn)
            assert reply["ok"] is False
            assert "ZeroDivisionError" in reply["error"]
            conn.close()

    def test_concurrent_executions_are_isolated(self, registry):
        sandbox = SubprocessSandbox()
        results = [None, None]

        def work(i):
            program = f"emit_result(double_value(x={i}))"
            results[i] = sandbox.execute(ExecutionRequest(program=program), registry)

        threads = [threading.Thread(target=work, args=(i,)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results[0].result_value == 0
        assert results[1].result_value == 2


docker_missing = not docker_available()


@pytest.mark.skipif(docker_missing, reason="docker runtime not available")
class TestDockerBackend:
    @pytest.fixture(scope="class")
    def docker_sandbox(self):
        return DockerSandbox()

    def test_result_roundtrip(self, docker_sandbox, registry):
        result = docker_sandbox.execute(
            ExecutionRequest(program="emit_result(double_value(x=3))"), registry)
        assert result.result_value == 6

    @pytest.mark.parametrize("probe_name", sorted(PROBES))
    def test_probes_fail_in_container(self, docker_sandbox, registry, probe_name):
        result = docker_sandbox.execute(
            ExecutionRequest(program=PROBES[probe_name]), registry)
        assert not result.ok
