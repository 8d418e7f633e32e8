import time

import pytest

from weierdim.cantor import build_family, choose_constants, escaping_chain
from weierdim.lattice import make_pole_critical_lattice
from weierdim.weierstrass import EllipticEvaluator, estimate_pole_constants

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def gamma3():
    """The pole-critical hexagonal lattice with wp(gamma1/2) = -3 gamma1."""
    return make_pole_critical_lattice(-3)


@pytest.fixture(scope="session")
def ev(gamma3):
    return EllipticEvaluator(gamma3)


@pytest.fixture(scope="session")
def ev_hp(gamma3):
    return EllipticEvaluator(gamma3, dps=50)


@pytest.fixture(scope="session")
def pole_data(ev):
    return estimate_pole_constants(ev, 0.2 * ev.lattice.min_generator, 0.02)


@pytest.fixture(scope="session")
def consts(ev, pole_data):
    return choose_constants(ev, pole_data)


@pytest.fixture(scope="session")
def tree4(ev, consts):
    """Depth-4 family with two children per cylinder, built with four workers."""
    t0 = time.perf_counter()
    tree = build_family(ev, consts, depth=4, branching=2, threads=4)
    tree.build_seconds = time.perf_counter() - t0
    return tree


@pytest.fixture(scope="session")
def tree3(ev, consts):
    return build_family(ev, consts, depth=3, branching=2, threads=1, full_density=False)


@pytest.fixture(scope="session")
def chain5(ev, consts):
    t0 = time.perf_counter()
    chain = escaping_chain(ev, consts, None, 5)
    return chain, time.perf_counter() - t0


def record_acceptance(name: str, passed: bool, detail: str, seconds: float | None = None):
    timing = f" ({seconds:.2f} s)" if seconds is not None else ""
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}{timing}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
