import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mvcost.capacity import dispersion, solve_capacity_cost  # noqa: E402
from mvcost.channel import bsc  # noqa: E402
from mvcost.kfunction import socr  # noqa: E402

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def bsc_instance():
    dmc = bsc(0.3)
    sol = solve_capacity_cost(dmc, 0.2)
    return dmc, sol, dispersion(sol, dmc)


@pytest.fixture(scope="session")
def r_star_01(bsc_instance):
    _, sol, disp = bsc_instance
    return socr(sol, disp, 0.05, 0.1).r_star


@pytest.fixture
def sqrt_vg(bsc_instance):
    return math.sqrt(bsc_instance[2].v_gamma)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
