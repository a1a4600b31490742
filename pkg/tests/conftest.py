import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfop.channel import build_pilot_book, estimation_stats
from cfop.config import SystemConfig
from cfop.deployment import generate_deployment

settings.register_profile("cfop", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cfop")

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    return record


def make_system(seed=0, **kw):
    cfg = SystemConfig(**kw)
    dep = generate_deployment(cfg, seed)
    pb = build_pilot_book(cfg, seed + 100)
    return cfg, dep, pb, estimation_stats(dep, pb, cfg)


@pytest.fixture
def small_contaminated():
    return make_system(3, M=3, N=2, K=3, tau_p=2, area_side_km=0.2, pilot_mode="random_contaminated")


@pytest.fixture
def small_orthogonal():
    return make_system(4, M=3, N=2, K=4, tau_p=4, area_side_km=0.3)
