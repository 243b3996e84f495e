import numpy as np
import pytest

from deepo import certificates as cert
from deepo import core
from deepo import data as dm


@pytest.fixture(scope="session")
def system():
    return dm.benchmark_system()


@pytest.fixture(scope="session")
def data(system):
    return dm.gaussian_batch(system, T=10, seed=0)


@pytest.fixture(scope="session")
def oracle(system, data):
    return cert.riccati_oracle(system, data)


@pytest.fixture(scope="session")
def G0(data):
    return core.initial_policy_from_gain(np.zeros((2, 4)), data)


@pytest.fixture(scope="session")
def plain_trace(system, data, G0):
    return core.run_deepo(G0, core.OptimizerConfig(max_iter=1000, grad_tol=1e-14), data, system.Q, system.R)


@pytest.fixture(scope="session")
def feasible_samples(system, data, plain_trace):
    """Feasible policies inside the sublevel set of J(G0)."""
    return cert.sample_sublevel(
        plain_trace.iterates, plain_trace.cost[0], data, system.Q, system.R, 200, seed=3
    )


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
