from __future__ import annotations

import pytest

from memloom.gateway import BackendConfig, LlmGateway, MockBackend


@pytest.fixture
def gateway() -> LlmGateway:
    return LlmGateway(MockBackend(64), 64)


@pytest.fixture
def backend_config() -> BackendConfig:
    return BackendConfig(kind="mock")


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[{status}] {name}")
