import hypothesis
import numpy as np
import pytest

from cefinfer import tables

hypothesis.settings.register_profile("default", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def table1():
    return tables.normalize(tables.load_fixture("table1.csv"))


@pytest.fixture(scope="session")
def table2():
    return tables.normalize(tables.load_fixture("table2.csv"))


@pytest.fixture(scope="session")
def table4():
    return tables.load_fixture("table4.json")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[k])
