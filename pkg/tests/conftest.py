import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(FIXTURES))

from make_goldens import build_fixture_store, counting_clock  # noqa: E402

from sensemaker.agents.roles import CodeAttempt, FulfillmentResult  # noqa: E402
from sensemaker.helpers import build_default_registry  # noqa: E402


@pytest.fixture(scope="session")
def goldens_dir() -> Path:
    return FIXTURES / "goldens"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return FIXTURES / "data"


@pytest.fixture()
def fixture_store():
    return build_fixture_store()


@pytest.fixture()
def fixture_registry(fixture_store):
    return build_default_registry(fixture_store)


@pytest.fixture()
def fixed_clock():
    return counting_clock()


class StubSandbox:
    """In-process sandbox stand-in for orchestration tests (no subprocesses).

    Interprets a few magic program prefixes:
      #fail        -> failing execution with a canned error
      #noresult    -> successful run that never emitted a result
      anything else -> success with result {"marker": <program text>}
    """

    name = "stub"

    def __init__(self):
        self.executions = 0

    def execute(self, request, registry):
        from sensemaker.sandbox import ExecutionResult

        self.executions += 1
        program = request.program.strip()
        if program.startswith("#fail"):
            return ExecutionResult(1, "", "RuntimeError: scripted failure",
                                   0.0, None, False)
        if program.startswith("#noresult"):
            return ExecutionResult(0, "no block here", "", 0.0, None, False)
        return ExecutionResult(0, "", "", 0.0, {"marker": program}, True)


@pytest.fixture()
def stub_sandbox():
    return StubSandbox()


def make_success_result(value) -> FulfillmentResult:
    return FulfillmentResult(ok=True, value=value,
                             attempts=[CodeAttempt("p", True)],
                             helper_names=["h"])


def make_failure_result(failure: str) -> FulfillmentResult:
    return FulfillmentResult(ok=False, failure=failure,
                             attempts=[CodeAttempt("p", False, error=failure)])
