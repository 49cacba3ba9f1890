import pytest
from hypothesis import HealthCheck, settings

from ccapm.instance import fixture_t1, fixture_t2

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def t1():
    return fixture_t1()


@pytest.fixture
def t2():
    return fixture_t2()



def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
