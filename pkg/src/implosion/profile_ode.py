"""Global profile by continuation of the phase-plane ODE from the origin patch.

With ``s = log R`` the profile solves the autonomous system

    dV/ds = Delta_V / Delta,    dQ/ds = Delta_Q / Delta,

which has a saddle at ``(v0, q0)`` (the value at ``R = 0``) and an attracting
node at ``(0, 0)`` (``R = infinity``).  The trajectory leaves the saddle along
its unstable manifold, which is only reachable through the power series, so
integration starts from :func:`origin_series.evaluate_series` at ``R_switch``.

Integration runs in two legs.  Near the saddle the unknowns are the deviations
``(V - v0, Q - q0)`` scaled by their launch size, so the relative accuracy of
a deviation of size 1e-26 (large ``N``) survives.  Once the deviation is of
order one the unknowns switch to ``(V, Q)`` themselves with a tighter
absolute tolerance, since both decay to zero in the far field.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .exponents import Exponents
from .origin_series import OriginSeries, evaluate_series, series_deviation, solve_recursion


_METHOD = "DOP853"


class CertificateViolation(RuntimeError):
    pass


class DeltaFloorError(CertificateViolation):
    pass


class PhaseField:
    """Right side of the profile ODE and its building blocks.

    Methods taking ``(V, Q)`` are the plain closed forms.  ``rates_dev`` takes
    deviations from the saddle and arranges the algebra so that terms that
    cancel exactly at the saddle are never formed.
    """

    def __init__(self, exp: Exponents):
        self.exp = exp
        self.a = exp.alpha
        self.g = exp.gamma
        self.d = exp.d
        self.cr = exp.c_r
        self.v0 = exp.v0
        self.q0 = exp.q0
        a, d, cr = self.a, self.d, self.cr
        self.floor = 1e-3 * cr * (exp.kappa - a * exp.q0) * (exp.kappa + a * exp.q0)

    def P1(self, V, Q):
        return (1 + (1 + self.a * self.d) * V) * Q

    def P2(self, V, Q):
        a, g = self.a, self.g
        return (self.cr + V) * (V + V * V + (2 * a * a / g) * Q * Q) + (a / g) * Q * Q * (V - self.v0)

    def Delta(self, V, Q):
        w = self.cr + V
        return w * (w * w - self.a**2 * Q * Q)

    def Delta_V(self, V, Q):
        return (self.cr + V) * (self.a * Q * self.P1(V, Q) - self.P2(V, Q))

    def Delta_Q(self, V, Q):
        return self.a * Q * self.P2(V, Q) - (self.cr + V) ** 2 * self.P1(V, Q)

    def rates(self, V, Q):
        D = self.Delta(V, Q)
        return self.Delta_V(V, Q) / D, self.Delta_Q(V, Q) / D

    def rates_dev(self, dv, dq):
        a, g, d = self.a, self.g, self.d
        V = self.v0 + dv
        Q = self.q0 + dq
        P1 = (1 + a * d) * dv * Q
        quad = dv * (1 + 2 * self.v0 + dv) + (2 * a * a / g) * dq * (2 * self.q0 + dq)
        w = self.cr + V
        P2 = w * quad + (a / g) * Q * Q * dv
        D = w * (w * w - a * a * Q * Q)
        if np.any(D < self.floor):
            raise DeltaFloorError(f"Delta={np.min(D):.3e} fell below the safety floor {self.floor:.3e}")
        return w * (a * Q * P1 - P2) / D, (a * Q * P2 - w * w * P1) / D

    def speeds(self, V, Q):
        w = self.cr + V
        return w - self.a * Q, w, w + self.a * Q


@dataclass
class RegionFlags:
    in_Omega: np.ndarray
    outgoing_ok: np.ndarray
    speed_minus: np.ndarray
    speed_mid: np.ndarray
    speed_plus: np.ndarray
    margin: np.ndarray


def check_invariant_region(V, Q, exp: Exponents, tol: float = 1e-12) -> RegionFlags:
    """Membership in the closed rectangle and the outgoing-speed bound."""
    V = np.asarray(V, dtype=float)
    Q = np.asarray(Q, dtype=float)
    v0, q0 = exp.v0, exp.q0
    v_hi = -(exp.d * exp.gamma / 2) * v0
    in_omega = (V >= v0 - tol) & (V <= v_hi + tol) & (Q >= -tol) & (Q <= q0 + tol)
    w = exp.c_r + V
    sm, sp = w - exp.alpha * Q, w + exp.alpha * Q
    bound = exp.outgoing_bound()
    return RegionFlags(in_omega, sm >= bound, sm, w, sp, sm - bound)


@dataclass
class ProfileTable:
    exp: Exponents
    series: OriginSeries
    R_switch: float
    R_max: float
    R: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    dV: np.ndarray
    dQ: np.ndarray
    in_Omega: np.ndarray
    outgoing_ok: np.ndarray
    rtol: float
    atol: float
    _legs: list = field(default_factory=list, repr=False)

    @property
    def ode_mask(self) -> np.ndarray:
        return self.R >= self.R_switch

    def all_certified(self) -> bool:
        return bool(np.all(self.in_Omega) and np.all(self.outgoing_ok) and self.q_monotone())

    def q_monotone(self) -> bool:
        # values can coincide in floating point near the origin for large N,
        # so strictness is read off the derivative
        return bool(np.all(self.dQ[1:] < 0) and np.all(np.diff(self.Q) <= 0))

    def to_csv(self) -> str:
        fl = check_invariant_region(self.V, self.Q, self.exp)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "V", "Q", "dV", "dQ", "speed_minus", "speed_mid", "speed_plus", "in_Omega", "outgoing_ok"])
        for i in range(len(self.R)):
            w.writerow(
                [repr(float(x)) for x in (self.R[i], self.V[i], self.Q[i], self.dV[i], self.dQ[i],
                                          fl.speed_minus[i], fl.speed_mid[i], fl.speed_plus[i])]
                + [int(self.in_Omega[i]), int(self.outgoing_ok[i])]
            )
        return buf.getvalue()


@dataclass
class _Leg:
    s0: float
    s1: float
    sol: object
    scale: float
    deviation: bool


def _decade_grid(lo: float, hi: float, per_decade: int) -> np.ndarray:
    n = max(2, int(np.ceil(np.log10(hi / lo) * per_decade)) + 1)
    return np.logspace(np.log10(lo), np.log10(hi), n)


def integrate_profile(
    exp: Exponents,
    series: OriginSeries | None = None,
    R_max: float = 1e4,
    rtol: float = 1e-10,
    atol: float = 1e-11,
    R_switch: float | None = None,
    points_per_decade: int = 64,
    launch: tuple[float, float] | None = None,
    certify: bool = True,
) -> ProfileTable:
    """Continue the profile from ``R_switch`` to ``R_max``.

    ``launch`` overrides the series launch deviation ``(V - v0, Q - q0)``; it
    exists to test the stationary fixed point.
    """
    if R_max < 1e3:
        raise ValueError("R_max must be at least 1e3")
    if series is None:
        series = solve_recursion(exp)
    if R_switch is None:
        R_switch = series.R_switch
    field_ = PhaseField(exp)
    v0, q0 = exp.v0, exp.q0

    if launch is None:
        dv0, dq0, _, _ = series_deviation(series, R_switch)
        dv0, dq0 = float(dv0), float(dq0)
    else:
        dv0, dq0 = launch
    scale = max(abs(dv0), abs(dq0)) or 1.0

    s0, s_end = np.log(R_switch), np.log(R_max)
    grid = _decade_grid(R_switch, R_max, points_per_decade)
    s_grid = np.log(grid)
    s_grid[0], s_grid[-1] = s0, s_end

    def rhs_dev(_s, y):
        rv, rq = field_.rates_dev(y[0] * scale, y[1] * scale)
        return [rv / scale, rq / scale]

    def left_saddle(_s, y):
        return max(abs(y[0] * scale) / abs(v0), abs(y[1] * scale) / q0) - 0.5

    left_saddle.terminal = True
    left_saddle.direction = 1

    leg_a = solve_ivp(
        rhs_dev, (s0, s_end), [dv0 / scale, dq0 / scale], method=_METHOD, rtol=rtol, atol=atol,
        dense_output=True, events=left_saddle,
    )
    if leg_a.status < 0:
        raise RuntimeError(f"integration failed near the saddle: {leg_a.message}")
    legs = [_Leg(s0, float(leg_a.t[-1]), leg_a.sol, scale, True)]

    s_mid = float(leg_a.t[-1])
    if s_mid < s_end:
        y_mid = leg_a.y[:, -1] * scale + np.array([v0, q0])

        def rhs_abs(_s, y):
            rv, rq = field_.rates_dev(y[0] - v0, y[1] - q0)
            return [rv, rq]

        leg_b = solve_ivp(
            rhs_abs, (s_mid, s_end), y_mid, method=_METHOD, rtol=rtol, atol=atol * 1e-3, dense_output=True
        )
        if leg_b.status < 0:
            raise RuntimeError(f"integration failed in the far field: {leg_b.message}")
        legs.append(_Leg(s_mid, s_end, leg_b.sol, 1.0, False))

    # origin patch samples, then ODE samples
    inner = np.concatenate([[0.0], _decade_grid(R_switch * 1e-2, R_switch, points_per_decade)[:-1]])
    Vi, Qi, dVi, dQi = evaluate_series(series, inner, check_range=False)
    dvo, dqo = _eval_legs(legs, s_grid, v0, q0)
    rv, rq = field_.rates_dev(dvo, dqo)
    Vo, Qo = v0 + dvo, q0 + dqo
    Ro = np.exp(s_grid)
    Ro[0] = R_switch
    R = np.concatenate([inner, Ro])
    V = np.concatenate([Vi, Vo])
    Q = np.concatenate([Qi, Qo])
    dV = np.concatenate([dVi, rv / Ro])
    dQ = np.concatenate([dQi, rq / Ro])
    fl = check_invariant_region(V, Q, exp)
    table = ProfileTable(exp, series, R_switch, R_max, R, V, Q, dV, dQ, fl.in_Omega, fl.outgoing_ok, rtol, atol, legs)
    if certify and launch is None:
        _certify(table)
    return table


def _certify(table: ProfileTable) -> None:
    bad = np.flatnonzero(~table.in_Omega)
    if bad.size:
        i = bad[0]
        raise CertificateViolation(f"left the invariant region at R={table.R[i]:.6g}")
    bad = np.flatnonzero(~table.outgoing_ok)
    if bad.size:
        i = bad[0]
        raise CertificateViolation(f"outgoing bound fails at R={table.R[i]:.6g}")
    bad = np.flatnonzero((table.dQ[1:] >= 0) | (np.diff(table.Q) > 0))
    if bad.size:
        i = bad[0] + 1
        raise CertificateViolation(f"Q not strictly decreasing at R={table.R[i]:.6g}")


def _eval_legs(legs, s, v0, q0):
    """Deviations ``(V - v0, Q - q0)`` at log-radii ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    dv = np.empty_like(s)
    dq = np.empty_like(s)
    for k, leg in enumerate(legs):
        last = k == len(legs) - 1
        m = (s >= leg.s0) & ((s < leg.s1) | (last & (s <= leg.s1 + 1e-12)))
        if not np.any(m):
            continue
        y = leg.sol(s[m])
        if leg.deviation:
            dv[m], dq[m] = y[0] * leg.scale, y[1] * leg.scale
        else:
            dv[m], dq[m] = y[0] - v0, y[1] - q0
    return dv, dq


def profile_deviation_at(table: ProfileTable, R):
    """``(V - v0, Q - q0)`` from the integrator's continuous extension, ``R >= R_switch``."""
    return _eval_legs(table._legs, np.log(np.atleast_1d(np.asarray(R, dtype=float))), table.exp.v0, table.exp.q0)


def profile_at(table: ProfileTable, R):
    """``(V, Q, dV/dR, dQ/dR)`` anywhere in ``[0, R_max]``.

    Below ``R_switch`` the series is used.  Above it values come from the
    integrator's continuous extension and derivatives from the ODE right side
    at those values, so grid nodes are reproduced exactly.
    """
    R = np.atleast_1d(np.asarray(R, dtype=float))
    if np.any(R > table.R_max * (1 + 1e-12)):
        raise ValueError(f"R={np.max(R)} beyond R_max={table.R_max}; use the tail expansion")
    if np.any(R < 0):
        raise ValueError("R must be nonnegative")
    V = np.empty_like(R)
    Q = np.empty_like(R)
    dV = np.empty_like(R)
    dQ = np.empty_like(R)
    lo = R < table.R_switch
    if np.any(lo):
        V[lo], Q[lo], dV[lo], dQ[lo] = evaluate_series(table.series, R[lo], check_range=False)
    hi = ~lo
    if np.any(hi):
        Rh = np.minimum(R[hi], table.R_max)
        dv, dq = profile_deviation_at(table, Rh)
        rv, rq = PhaseField(table.exp).rates_dev(dv, dq)
        V[hi] = table.exp.v0 + dv
        Q[hi] = table.exp.q0 + dq
        dV[hi] = rv / Rh
        dQ[hi] = rq / Rh
    return V, Q, dV, dQ


def equation_residuals(exp: Exponents, V, Q, RdV, RdQ):
    """Relative residuals of the two profile equations in undivided form."""
    f = PhaseField(exp)
    a = f.a
    w = exp.c_r + V
    t1 = (f.P1(V, Q), w * RdQ, a * Q * RdV)
    t2 = (f.P2(V, Q), a * w * Q * RdQ, w * w * RdV)
    r1 = abs(sum(t1)) / (sum(abs(t) for t in t1) + 1e-300)
    r2 = abs(sum(t2)) / (sum(abs(t) for t in t2) + 1e-300)
    return r1, r2


def saddle_distance(table: ProfileTable) -> np.ndarray:
    """Scaled distance of each ODE sample from the saddle point."""
    m = table.ode_mask
    return np.hypot((table.V[m] - table.exp.v0) / table.exp.v0, (table.Q[m] - table.exp.q0) / table.exp.q0)


def build_profile(exp: Exponents, **kw) -> ProfileTable:
    return integrate_profile(exp, solve_recursion(exp), **kw)
