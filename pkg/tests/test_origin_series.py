import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from implosion.exponents import GasParams, compute_exponents, parameter_grid
from implosion.origin_series import (
    ExponentInconsistency,
    OutOfRangeError,
    build_kernel,
    det_scale,
    evaluate_series,
    factored_det,
    kernel_direction,
    normalized_det,
    recursion_matrix,
    series_deviation,
    solve_recursion,
    tail_remainder_bound,
)

MONO = compute_exponents(GasParams(3, "5/3", 1))


def test_factored_det_matches_matrix():
    for n in range(1, 12):
        M = recursion_matrix(MONO, n)
        assert factored_det(MONO, n) == pytest.approx(np.linalg.det(M), rel=1e-12, abs=1e-12 * det_scale(MONO, n))


def test_resonant_order_singular():
    assert abs(normalized_det(MONO, 1)) <= 1e-10
    assert normalized_det(MONO, 2) > 0


def test_resonance_unique_over_grid():
    for p in parameter_grid():
        e = compute_exponents(p)
        dets = np.array([normalized_det(e, n) for n in range(1, 51)])
        zero = np.flatnonzero(np.abs(dets) <= 1e-10) + 1
        assert zero.tolist() == [p.N], p


def test_kernel_direction():
    qN, vN = kernel_direction(MONO)
    a, d, k, q0 = MONO.alpha, MONO.d, MONO.kappa, MONO.q0
    assert vN == 1.0
    assert qN == pytest.approx(-q0 * (1 + a * d + 2 * a) / (2 * k), rel=1e-15)
    M = recursion_matrix(MONO, 1)
    assert np.max(np.abs(M @ [qN, vN])) < 1e-13 * np.abs(M).max()


def test_first_coefficients():
    s = solve_recursion(MONO, 8)
    assert s.v[1] == 1.0
    assert s.q[1] == pytest.approx(-MONO.q0 * (8 / 3) / (2 * MONO.kappa), rel=1e-14)
    assert s.q[1] == pytest.approx(-1.8451, abs=1e-4)
    # recursion output, confirmed by substituting truncated series into the equations
    assert s.v[2] == pytest.approx(-5.0176586552847, rel=1e-12)
    assert s.q[2] == pytest.approx(7.96153537735944, rel=1e-12)


def test_sparsity_for_higher_index():
    s = solve_recursion(compute_exponents(GasParams(3, "5/3", 2)), 8)
    assert s.v[1] == 0 and s.q[1] == 0
    assert s.v[3] == 0 and s.q[3] == 0
    assert s.v[2] == 1.0 and s.q[2] < 0


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 3), num=st.integers(1, 20), N=st.integers(1, 8))
def test_truncation_resubstitution(d, num, N):
    e = compute_exponents(GasParams(d, 1 + __import__("fractions").Fraction(2 * d * num, 20), N))
    s = solve_recursion(e)
    assert oracles.series_residual(e, s.v, s.q, min(6 * N, s.order_max)) <= 1e-12
    assert np.max(s.residuals) <= 1e-12


def test_ground_state_signs_over_grid():
    for p in parameter_grid()[::7]:
        s = solve_recursion(compute_exponents(p))
        assert s.v[p.N] == 1.0 and s.q[p.N] < 0


def test_evaluate_at_origin():
    s = solve_recursion(MONO)
    V, Q, dV, dQ = evaluate_series(s, 0.0)
    assert (V, Q, dV, dQ) == (MONO.v0, MONO.q0, 0.0, 0.0)


def test_partial_sums_small_R():
    s = solve_recursion(MONO)
    V, _, _, _ = evaluate_series(s, 0.1)
    assert abs((V - MONO.v0) - s.v[1] * 0.01) <= abs(s.v[2]) * 1e-4
    # brute force partial sums
    brute = sum(s.v[n] * 0.1 ** (2 * n) for n in range(s.order_max + 1))
    assert V == pytest.approx(brute, abs=1e-15)


def test_truncation_orders_within_bound():
    s = solve_recursion(MONO, 10)
    s6 = solve_recursion(MONO, 6)
    R = 0.1
    assert R < s.radius_lb
    diff = abs(evaluate_series(s, R)[0] - evaluate_series(s6, R)[0])
    assert diff <= tail_remainder_bound(s, R, 6)


def test_out_of_range():
    s = solve_recursion(MONO)
    with pytest.raises(OutOfRangeError):
        evaluate_series(s, s.radius_lb * 1.01)
    evaluate_series(s, s.radius_lb * 1.01, check_range=False)


def test_derivatives_against_differences():
    s = solve_recursion(MONO)
    R, h = 0.05, 1e-5
    _, _, dV, dQ = evaluate_series(s, R)
    Vp, Qp, _, _ = evaluate_series(s, R + h)
    Vm, Qm, _, _ = evaluate_series(s, R - h)
    assert dV == pytest.approx((Vp - Vm) / (2 * h), rel=1e-7)
    assert dQ == pytest.approx((Qp - Qm) / (2 * h), rel=1e-7)


def test_deviation_keeps_relative_accuracy():
    e = compute_exponents(GasParams(2, 2, 20))
    s = solve_recursion(e)
    dv, dq, rv, rq = series_deviation(s, 0.05)
    assert dv == pytest.approx(0.05**40, rel=1e-6)
    assert rv == pytest.approx(40 * 0.05**40, rel=1e-6)


def test_exponent_inconsistency_raised():
    bad = compute_exponents(GasParams(3, "5/3", 2))
    # exponents of N = 2 with the resonance claimed at N = 1
    import dataclasses

    wrong = dataclasses.replace(bad, params=GasParams(3, "5/3", 1))
    with pytest.raises(ExponentInconsistency):
        solve_recursion(wrong, 4)


def test_order_too_small():
    with pytest.raises(ValueError):
        solve_recursion(compute_exponents(GasParams(3, "5/3", 3)), 5)


def test_kernel_record():
    s = solve_recursion(MONO)
    k = build_kernel(MONO, 3, s)
    lhs = k.M @ [s.q[3], s.v[3]]
    assert lhs == pytest.approx([k.F1, k.F2], rel=1e-12)
    with pytest.raises(ValueError):
        build_kernel(MONO, 0)


def test_json_lists_nonzero_orders():
    import json

    s = solve_recursion(compute_exponents(GasParams(3, "5/3", 2)), 8)
    rows = json.loads(s.to_json())["coefficients"]
    assert [r["k"] for r in rows] == [0, 2, 4, 6, 8]


def test_growth_fit_radius():
    s = solve_recursion(MONO)
    assert s.radius_is_heuristic
    assert 0 < s.R_switch <= 0.25 and s.R_switch < s.radius_lb
    assert math.isfinite(s.growth_C)
