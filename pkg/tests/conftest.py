import numpy as np
import pytest

from beamselect.instance import InstanceConfig, generate_instance


def make_inst(n=8, m=4, l=4, seed=0, **kw):
    return generate_instance(InstanceConfig.uniform(n, m, l, seed=seed, **kw))


@pytest.fixture
def small_inst():
    return make_inst(6, 2, 3, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance outcomes, printed after the run by the summary hook below
ACCEPTANCE = []


def report(name, ok, detail=""):
    ACCEPTANCE.append((name, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
