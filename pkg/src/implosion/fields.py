"""Physical fields of the globally self-similar imploding solution.

With ``R = r (-t)^(-c_r)`` the density, radial velocity and pressure are

    rho = (-t)^((c_r - 1 - c_b)/a) (a Q / H)^(1/a)
    u   = (-t)^(c_r - 1) R V
    p   = (-t)^((g (c_r - 1) - c_b)/a) (1/g) (a R Q)^(g/a) (R H)^(-1/a)

where ``a = (g - 1)/2``.  Beyond the end of the profile table the fields use
the far-field series unless that is disabled.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exponents import Exponents
from .profile_ode import ProfileTable, profile_at
from .tail import EntropyProfile, TailSeries, entropy_at, eval_tail

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class ExtrapolationError(ValueError):
    pass


@dataclass
class Snapshot:
    t: float
    r: np.ndarray
    R: np.ndarray
    rho: np.ndarray
    u_r: np.ndarray
    p: np.ndarray
    c: np.ndarray  # sound speed sqrt(gamma p / rho)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "rho", "u_r", "p", "c"])
        for i in range(len(self.r)):
            w.writerow([repr(float(x)) for x in (self.t, self.r[i], self.rho[i], self.u_r[i], self.p[i], self.c[i])])
        return buf.getvalue()


def profiles_at(table: ProfileTable, tail: TailSeries | None, R, extrapolate: bool = True):
    """``(V, Q, H)`` for any ``R >= 0``, using the tail beyond ``R_max``."""
    exp = table.exp
    R = np.atleast_1d(np.asarray(R, dtype=float))
    V = np.empty_like(R)
    Q = np.empty_like(R)
    H = np.empty_like(R)
    inside = R <= table.R_max
    if np.any(inside):
        V[inside], Q[inside], _, _ = profile_at(table, R[inside])
        H[inside] = entropy_at(table, R[inside])
    if np.any(~inside):
        if not extrapolate or tail is None:
            raise ExtrapolationError(f"R={np.max(R):.3g} beyond R_max={table.R_max:.3g}")
        Ro = R[~inside]
        V[~inside], Q[~inside] = eval_tail(exp, tail.v, tail.q, Ro)
        H_end = entropy_at(table, np.array([table.R_max]))[0]
        H[~inside] = H_end * _tail_entropy_factor(exp, tail.v, tail.q, table.R_max, Ro)
    return V, Q, H


def _tail_entropy_factor(exp: Exponents, v, q, R0: float, R):
    """``H(R)/H(R0)`` from the tail expansion of ``V``."""
    cr, kap = exp.c_r, exp.kappa
    x0 = R0 ** (-1 / cr)
    x = R ** (-1 / cr)
    # int_{s0}^{s} kappa V/(c_r (c_r + V)) ds = int_x^{x0} kappa V/((c_r + V) y) dy
    mid, half = (x0 + x) / 2, (x0 - x) / 2
    ys = mid[:, None] + half[:, None] * _GL_X[None, :]
    Vy, _ = eval_tail(exp, v, q, ys ** (-cr))
    integral = (kap * Vy / ((cr + Vy) * ys)) @ _GL_W * half
    return (R / R0) ** (exp.v0 / cr) * np.exp(-integral)


def snapshot(
    table: ProfileTable,
    entropy: EntropyProfile | None,
    exp: Exponents,
    t: float,
    r_grid,
    tail: TailSeries | None = None,
    extrapolate: bool = True,
) -> Snapshot:
    if not (-1 <= t < 0):
        raise ValueError("t must lie in [-1, 0)")
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r_grid must be nonnegative and increasing")
    a, g, cr, cb = exp.alpha, exp.gamma, exp.c_r, exp.c_b
    tau = -t
    R = r * tau ** (-cr)
    V, Q, H = profiles_at(table, tail, R, extrapolate)
    rho = tau ** ((cr - 1 - cb) / a) * (a * Q / H) ** (1 / a)
    u = tau ** (cr - 1) * R * V
    p = np.zeros_like(R)
    pos = R > 0
    p[pos] = (
        tau ** ((g * (cr - 1) - cb) / a)
        * (1 / g)
        * (a * R[pos] * Q[pos]) ** (g / a)
        * (R[pos] * H[pos]) ** (-1 / a)
    )
    return Snapshot(t, r, R, rho, u, p, np.sqrt(g * p / rho))


def default_r_grid(r_min: float = 1e-6, r_max: float = 1.0, n: int = 512) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(np.log10(r_min), np.log10(r_max), n - 1)])


@dataclass(frozen=True)
class ImplosionLimits:
    """Limits ``f(r, 0^-) = prefactor * r^exponent`` for each field."""

    u_r: tuple[float, float]
    sigma: tuple[float, float]
    b: tuple[float, float]
    rho: tuple[float, float]
    p: tuple[float, float]
    E: tuple[float, float]
    finite_mass: bool
    finite_momentum: bool
    finite_energy: bool
    velocity_blowup: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def implosion_limits(exp: Exponents, tail: TailSeries) -> ImplosionLimits:
    a, g, d, cr, cb = exp.alpha, exp.gamma, exp.d, exp.c_r, exp.c_b
    v1, q1, h1 = tail.v1, tail.q1, tail.h1
    e_u = 1 - 1 / cr
    e_b = cb / cr
    e_rho = (cr - 1 - cb) / (a * cr)
    e_p = (g * (cr - 1) - cb) / (a * cr)
    rho_pre = (a * q1 / h1) ** (1 / a)
    p_pre = (1 / g) * (a * q1) ** (g / a) * h1 ** (-1 / a)
    E_pre = 0.5 * rho_pre * v1 * v1 + p_pre / (g - 1)
    ad = 1 + a * d
    # sufficient conditions for local integrability of r^(d-1) times each density
    finite_mass = cr > 1 / ad
    finite_energy = cr > (d + 2 + 2 * a * d) / ((d + 2) * ad)
    finite_momentum = cr > (d + 1 + a * d) / ((d + 1) * ad)
    return ImplosionLimits(
        u_r=(v1, e_u),
        sigma=(q1, e_u),
        b=(h1, e_b),
        rho=(rho_pre, e_rho),
        p=(p_pre, e_p),
        E=(E_pre, e_p),
        finite_mass=finite_mass,
        finite_momentum=finite_momentum,
        finite_energy=finite_energy,
        velocity_blowup=cr < 1,
    )


@dataclass(frozen=True)
class RateFit:
    rho: float
    p: float
    u_r: float
    rho_expected: float
    p_expected: float
    u_expected: float


def blowup_rate_regression(snapshots: list[Snapshot], exp: Exponents, R_probe: float = 1.0) -> RateFit:
    """Log-log slopes of ``max rho``, ``sup p`` and ``|u_r|`` at fixed ``R`` against ``-t``."""
    if len(snapshots) < 4:
        raise ValueError("need at least four snapshots")
    taus = np.array([-s.t for s in snapshots])
    lt = np.log(taus)
    rho_max = np.array([np.max(s.rho) for s in snapshots])
    p_sup = np.array([np.max(s.p) for s in snapshots])
    a, g, cr, cb = exp.alpha, exp.gamma, exp.c_r, exp.c_b
    # u at the moving point r = R_probe (-t)^c_r, interpolated from each snapshot
    u_probe = []
    for s, tau in zip(snapshots, taus):
        r_probe = R_probe * tau**cr
        m = s.r > 0
        if not (s.r[m][0] <= r_probe <= s.r[-1]):
            raise ValueError(f"probe radius {r_probe:.3g} outside snapshot grid at t={s.t}")
        u_probe.append(abs(np.interp(np.log(r_probe), np.log(s.r[m]), s.u_r[m])))
    u_fit = np.polyfit(lt, np.log(u_probe), 1)[0]
    return RateFit(
        rho=float(np.polyfit(lt, np.log(rho_max), 1)[0]),
        p=float(np.polyfit(lt, np.log(p_sup), 1)[0]),
        u_r=float(u_fit),
        rho_expected=(cr - 1 - cb) / a,
        p_expected=min(0.0, (g * (cr - 1) - cb) / a),
        u_expected=cr - 1,
    )
