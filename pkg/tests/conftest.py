import numpy as np
import pytest
from hypothesis import settings

from helpers import FIXTURES

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)




def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{status:<4} {number}. {title}  {detail}".rstrip())
