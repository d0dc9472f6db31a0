import numpy as np
import pytest

from eddylimit.mesh import BoundarySplit, build_grid

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["gamma1", "gamma2", "mixed"])
def split(request):
    return {
        "gamma1": BoundarySplit.all_gamma1(),
        "gamma2": BoundarySplit.all_gamma2(),
        "mixed": BoundarySplit(frozenset({"x-", "y+", "z+"})),
    }[request.param]


@pytest.fixture
def grid4(split):
    return build_grid((4, 4, 4), 1.0, None, split)


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
