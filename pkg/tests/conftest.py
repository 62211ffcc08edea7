import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from implosion.exponents import GasParams, compute_exponents  # noqa: E402
from implosion.origin_series import solve_recursion  # noqa: E402
from implosion.profile_ode import integrate_profile  # noqa: E402
from implosion.tail import build_entropy, fit_tail  # noqa: E402

MONATOMIC = GasParams(3, "5/3", 1)


class Pipeline:
    def __init__(self, params, R_max=1e4):
        self.params = params
        self.exp = compute_exponents(params)
        self.series = solve_recursion(self.exp)
        self.table = integrate_profile(self.exp, self.series, R_max=R_max)
        self.entropy = build_entropy(self.table)
        self.tail = fit_tail(self.table, entropy=self.entropy)


_cache = {}


def pipeline(params, R_max=1e4):
    key = (params, R_max)
    if key not in _cache:
        _cache[key] = Pipeline(params, R_max)
    return _cache[key]


@pytest.fixture(scope="session")
def mono():
    return pipeline(MONATOMIC)


@pytest.fixture(scope="session")
def mono_far():
    return pipeline(MONATOMIC, 1e6)


_runs = {}


def decay_runs(cells=512, tau_end=120.0):
    """Unperturbed and Gaussian-perturbed runs for the monatomic point, with wall times."""
    import time

    from implosion import evolution

    key = (cells, tau_end)
    if key not in _runs:
        t = pipeline(MONATOMIC).table
        t0 = time.perf_counter()
        sim = evolution.make_simulator(t, cells=cells)
        zero = evolution.run_evolution(t, perturbation=None, tau_end=tau_end, sim=sim)
        t1 = time.perf_counter()
        pert = evolution.run_evolution(t, perturbation=evolution.gaussian_bump(1e-3), tau_end=tau_end, sim=sim)
        t2 = time.perf_counter()
        _runs[key] = (zero, pert, t1 - t0, t2 - t1)
    return _runs[key]


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}
ACCEPTANCE_TITLES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_TITLES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_TITLES):
        ok, detail = ACCEPTANCE.get(num, (False, "did not complete"))
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {ACCEPTANCE_TITLES[num]}: {detail}")
