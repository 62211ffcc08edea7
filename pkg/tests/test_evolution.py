import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import MONATOMIC, decay_runs, pipeline
from implosion import evolution as ev
from implosion.exponents import GasParams, compute_exponents
from implosion.spectra import decay_floor


@pytest.fixture(scope="module")
def table():
    return pipeline(MONATOMIC).table


@pytest.fixture(scope="module")
def sim(table):
    return ev.make_simulator(table, cells=512)


# perturbations -------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.3, 3.0), st.integers(0, 3))
def test_bump_taylor_against_mpmath(center, width, power):
    b = ev.Bump("V", 1.0, center, width, power)
    f = lambda r: r ** (2 * power) * (mpmath.exp(-((r - center) / width) ** 2) + mpmath.exp(-((r + center) / width) ** 2)) / 2
    with mpmath.workdps(30):
        ref = mpmath.taylor(f, 0, 10)
    assert all(abs(ref[j]) < 1e-20 for j in range(1, 11, 2))
    np.testing.assert_allclose(b.taylor(5), [float(ref[2 * j]) for j in range(6)], rtol=1e-10, atol=1e-14)


def test_parse_perturbation():
    p = ev.parse_perturbation("V 1e-3; Q 2e-3 0.5 2 1\nK -1e-4 0 1")
    assert [b.field for b in p.bumps] == ["V", "Q", "K"]
    assert p.bumps[1] == ev.Bump("Q", 2e-3, 0.5, 2.0, 1)
    assert ev.parse_perturbation(p.to_text()) == p
    assert ev.parse_perturbation("") == ev.Perturbation()
    for bad in ("X 1", "V", "V 1 0 0", "V 1 0 1 -1"):
        with pytest.raises(ValueError):
            ev.parse_perturbation(bad)
    np.testing.assert_allclose(p.scaled(2).evaluate("V", [0.0]), [2e-3])


def test_vanishing_condition():
    ev.check_vanishing(ev.gaussian_bump(1e-3), 1)
    with pytest.raises(ev.PerturbationRejected) as info:
        ev.check_vanishing(ev.gaussian_bump(1e-3), 2)
    assert info.value.order == 2
    ok = ev.parse_perturbation("V 1e-3 0 1 2; Q 1e-3 0 1 2; K 1e-3 0 1 2")
    ev.check_vanishing(ok, 2)
    with pytest.raises(ev.PerturbationRejected):
        ev.check_vanishing(ok, 3)
    ev.check_vanishing(ev.parse_perturbation("V 1e-3 0 1 3"), 3)


def test_rejected_perturbation_at_init():
    t = pipeline(GasParams(3, "5/3", 2)).table
    with pytest.raises(ev.PerturbationRejected):
        ev.init_state(t, perturbation=ev.gaussian_bump(1e-3), cells=64)
    s = ev.init_state(t, perturbation="V 1e-3 0 1 2; Q 1e-3 0 1 2", cells=512)
    assert s.taylor.v[1] == pytest.approx(0, abs=1e-10)
    assert s.taylor.v[2] == pytest.approx(1e-3, rel=1e-4)
    with pytest.raises(ValueError):
        ev.init_state(t, perturbation="Q -10", cells=64)


# grid and derivative ----------------------------------------------------------------

def test_grid():
    g = ev.make_grid(256, 50.0, 0.5)
    assert np.all(np.diff(g.R) > 0) and g.R[0] > 0
    assert g.R[-1] < 50.0 < 0.5 * np.sinh(g.B * (g.xi[-1] + g.dxi))
    with pytest.raises(ValueError):
        ev.make_grid(8)


def test_rdr_third_order():
    errs = []
    for n in (128, 256, 512):
        g = ev.make_grid(n, 20.0)
        f = np.exp(-g.R**2) + 0.5 * np.cos(g.R)
        exact = -2 * g.R**2 * np.exp(-g.R**2) - 0.5 * g.R * np.sin(g.R)
        errs.append(np.max(np.abs(ev.rdr(g, f) - exact)))
    assert errs[0] / errs[1] > 6 and errs[1] / errs[2] > 6


# Taylor record ----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_taylor_record_exact_on_polynomials(c):
    g = ev.make_grid(512)
    fit = ev._Fitter(g, 1)
    x = g.R**2
    vals = c[0] + c[1] * x + c[2] * x * x
    rec = fit.record(vals, 2 * vals, -vals)
    np.testing.assert_allclose(rec.v, c, atol=1e-9)
    np.testing.assert_allclose(rec.q, 2 * np.array(c), atol=2e-9)
    assert rec.parity_residual < 1e-12 and not rec.ill_conditioned


def test_taylor_record_of_bump(table, sim):
    s = ev.init_state(table, perturbation=ev.gaussian_bump(1e-3, 2.0), sim=sim)
    ref = ev.Bump("V", 1e-3, 0, 2.0).taylor(2)
    np.testing.assert_allclose(s.taylor.v[:2], ref[:2], rtol=1e-5)
    assert not s.taylor.parity_violation
    absolute = ev.taylor_record(s, absolute=True)
    # the profile is not a quadratic in R^2, so the fit carries truncation error
    assert absolute.v[0] == pytest.approx(table.exp.v0 + 1e-3, abs=1e-7)
    with pytest.raises(ValueError):
        ev.taylor_record(s, order=0)
    assert ev.taylor_record(s, order=4).v.shape == (5,)


def test_taylor_record_of_profile(sim, table):
    P = pipeline(MONATOMIC)
    rec = ev.taylor_record(ev.init_state(table, sim=sim), absolute=True)
    np.testing.assert_allclose(rec.v[:2], P.series.v[:2], rtol=1e-3)
    np.testing.assert_allclose(rec.q[:2], P.series.q[:2], rtol=1e-3)
    assert rec.k[0] == pytest.approx(0, abs=1e-7)
    assert rec.k[1] == pytest.approx(-1 / (2 * table.exp.kappa), rel=1e-3)


def test_odd_component_flagged(sim, table):
    s = ev.init_state(table, perturbation=ev.gaussian_bump(1e-3), sim=sim)
    assert not s.taylor.parity_violation
    odd = ev.EvolutionState(0.0, s.V + 1e-3 * s.R, s.Q, s.K, s.modulation, s.taylor, sim)
    assert ev.taylor_record(odd).parity_violation


# modulation ---------------------------------------------------------------------------

def test_modulation_at_rest(sim, table):
    s = ev.init_state(table, sim=sim)
    e = table.exp
    m = s.modulation
    assert m.c_r == pytest.approx(e.c_r, abs=1e-13)
    assert m.c_u == pytest.approx(e.c_r - 1, abs=1e-13)
    assert m.c_b == pytest.approx(e.c_b, abs=1e-13)
    assert ev.stationary_residual(s, balanced=True) < 1e-13
    assert ev.stationary_residual(s) < 1e-3


def test_modulation_cancels_resonant_direction(sim, table):
    # a pure kernel direction at order 2N moves only through phi_dag
    e = table.exp
    closure = sim.closure
    zero = np.zeros(3)
    p_dag = ev.a1_eigensystem(e.params)[2][1]
    rec = ev.TaylorRecord(np.array([0, p_dag[1], 0.0]), np.array([0, p_dag[0], 0.0]),
                          np.array([0, p_dag[2], 0.0]), 1, 1.0, 0.0)
    t = closure(rec).tilde
    np.testing.assert_allclose(t, [e.kappa] * 3, rtol=1e-12)
    rec0 = ev.TaylorRecord(np.array([1e-3, 0]), zero[:2], np.array([2e-3, 0]), 1, 1.0, 0.0)
    cr, cu, cb = closure(rec0).tilde
    assert cr == pytest.approx(-1e-3)
    assert cb == pytest.approx(-2 * e.alpha * e.d / (1 + e.alpha * e.d) * 2e-3)


def test_cfl_guard(sim, table):
    s = ev.init_state(table, sim=sim)
    with pytest.raises(ValueError):
        ev.step(s, 10 * ev.stable_dtau(s))


def test_k_reconstruction(sim, table):
    s = ev.init_state(table, perturbation=ev.gaussian_bump(1e-3), sim=sim)
    K = ev.reconstruct_K(s)
    assert np.max(np.abs(K - s.K)) < 1e-6
    assert ev.riemann_diagnostics(s).theta == pytest.approx(0.5 / table.exp.c_r)


# runs ----------------------------------------------------------------------------------

def test_zero_run_stays_at_floor():
    zero, _, _, _ = decay_runs()
    for name, series in zero.series.items():
        assert np.max(np.abs(series)) < 1e-12, name
    assert zero.min_speed > 0


def test_perturbed_run_decays():
    zero, pert, _, _ = decay_runs()
    rep = ev.decay_report(pert, ev.floors_from(zero))
    lam = decay_floor(compute_exponents(MONATOMIC))
    assert rep.lambda_floor == lam
    for f in rep.fits.values():
        assert f.rate >= 0.5 * lam and math.isfinite(f.rate), f
        assert f.window[1] - f.window[0] > 10
    assert pert.min_speed > 0
    assert pert.max_parity < ev.PARITY_TOL
    assert np.max(np.abs(pert.series["sup"][-5:])) < 1e-10


def test_early_shrink_and_zeroth_order_rate():
    _, pert, _, _ = decay_runs()
    e = compute_exponents(MONATOMIC)
    i5 = np.searchsorted(pert.tau, 5.0)
    assert pert.series["sup"][i5] <= pert.series["sup"][0] * math.exp(-decay_floor(e) * 5 * 0.5)
    # the zeroth-order coefficients decay at 2 a d / (1 + a d) up to O(eps)
    z = np.sqrt(pert.series["v0"] ** 2 + pert.series["q0"] ** 2 + pert.series["k0"] ** 2)
    rate = -np.gradient(np.log(z), pert.tau)
    lam0 = 2 * e.alpha * e.d / (1 + e.alpha * e.d)
    live = (pert.tau > 0.2) & (z > 1e-9)
    assert np.max(np.abs(rate[live] - lam0)) < pert.eps
    for k in range(3):
        dev = np.abs(pert.modulation[:, k] - (e.c_r, e.c_r - 1, e.c_b)[k])
        assert dev[-1] < 1e-6 * dev[0]


def test_resolution_doubling():
    _, coarse, _, _ = decay_runs(256)
    zero, fine, _, _ = decay_runs(512)
    floors = ev.floors_from(zero)
    rc = ev.decay_report(coarse, floors, names=("v0", "q0", "k0", "cr", "cu", "cb"))
    rf = ev.decay_report(fine, floors, names=("v0", "q0", "k0", "cr", "cu", "cb"))
    for name in rc.fits:
        assert rc.fits[name].rate == pytest.approx(rf.fits[name].rate, rel=0.1), name


def test_snapshots_and_csv(table):
    run = ev.run_evolution(table, perturbation=ev.gaussian_bump(1e-3), tau_end=0.5, cells=64, snapshot_taus=(0.0, 0.25))
    assert [round(s.tau, 1) for s in run.snapshots] == [0.0, 0.3] or len(run.snapshots) == 2
    assert run.snapshots[1].tau >= 0.25
    lines = run.to_csv().splitlines()
    assert lines[0] == "# schema,1" and lines[1].startswith("tau,v0")
    assert len(lines) == 2 + len(run.tau)
    dump = ev.field_dump_csv(run.final).splitlines()
    assert dump[1] == "R,V,Q,K,H" and len(dump) == 66


def test_config_roundtrip(table):
    cfg = ev.EvolveConfig(GasParams(2, "7/5", 3), cells=128, R_out=40.0, tau_end=5.5,
                          perturbation=ev.parse_perturbation("V 1e-3 0 1 3"), snapshot_taus=(1.0, 2.5))
    text = cfg.to_text()
    assert text.startswith("# schema 1")
    assert ev.parse_evolve_config(text) == cfg
    minimal = ev.parse_evolve_config("[params]\nd = 3\ngamma = 5/3\n")
    assert minimal.params == MONATOMIC and minimal.cells == 512
    with pytest.raises(ValueError):
        ev.parse_evolve_config("[params]\nd = 3\ngamma = 9\n")
    small = ev.run_from_config(ev.EvolveConfig(MONATOMIC, cells=64, tau_end=0.2), table)
    assert small.tau[-1] == pytest.approx(0.2)
