from __future__ import annotations

import pytest

from lmsched.config import resolve_resource
from lmsched.profiles import read_profile, reference_profile
from lmsched.workload import load_trace


@pytest.fixture(scope="session")
def trained():
    """(model profile, estimator) from the packaged artifact."""
    return read_profile(resolve_resource("packaged:dialogpt_synthetic.profile.json"))


@pytest.fixture(scope="session")
def train_records():
    return load_trace(resolve_resource("packaged:synthetic_train.jsonl"))


@pytest.fixture(scope="session")
def test_records():
    return load_trace(resolve_resource("packaged:synthetic_test.jsonl"))


@pytest.fixture
def dialogpt():
    return reference_profile("DialoGPT")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
