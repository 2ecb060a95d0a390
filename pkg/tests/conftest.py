import os

# allow in-process thread-count sweeps up to 8 regardless of core count;
# must be set before numba gets imported by the package
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from oodbench import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load cached) kernels outside any timed section
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    entries = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                entries.append((rep.nodeid.split("::")[-1], outcome.upper()))
    if entries:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in entries:
            terminalreporter.write_line(f"{outcome:6s} {name}")
