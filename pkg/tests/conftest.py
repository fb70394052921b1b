from __future__ import annotations

import pytest

from unirank.mockserver import MockServer
from unirank.registry import ProviderSet

# filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def reference_providers() -> ProviderSet:
    return ProviderSet.reference(seed=0)


@pytest.fixture
def mock_server():
    servers: list[MockServer] = []

    def start(script):
        srv = MockServer(script).start()
        servers.append(srv)
        return srv

    yield start
    for srv in servers:
        srv.stop()


@pytest.fixture
def scrubbed_env(monkeypatch):
    for name in ("RERANK_API_KEY", "RERANK_API_ENDPOINT", "RERANK_LLM_ENDPOINT"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
