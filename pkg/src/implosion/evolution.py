"""Modulated self-similar evolution of ``(V, Q, K)`` in radial symmetry.

The unknowns solve

    Q_t + (c_r - c_u + (1 + a d) V) Q + (c_r + V) D Q + a Q D V = 0
    V_t + (c_r - c_u) V + V^2 + (2 a^2/g) Q^2 + (c_r + V) D V + a Q D Q - (a/g) Q^2 D K = 0
    K_t + (c_r - c_b + V) + (c_r + V) D K = 0

with ``D = R d/dR``.  The three modulation functions are recomputed from the
Taylor coefficients of the perturbation at ``R = 0`` so that the zeroth-order
and order-``2N`` coefficients are damped.

Space: cell centres ``R_i = A sinh(B xi_i)`` with ``xi`` uniform in ``(0, 1)``,
so cells are roughly uniform near the origin and logarithmic far out.  Values
across ``R = 0`` come from evenness.  All characteristic speeds are outward in
the regime of interest, so ``D`` uses third-order upwind-biased differences and
the last cell a one-sided stencil (pure outflow).  Time: SSP-RK3.
By default the scheme is well balanced: the discrete residual of the sampled
profile is subtracted, so the unperturbed state does not drift.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson

from .exponents import Exponents, GasParams, compute_exponents, parse_gamma
from .profile_ode import ProfileTable, build_profile, profile_at
from .spectra import a1_eigensystem, decay_floor
from .tail import entropy_at

SCHEMA_VERSION = 1
FIT_CELLS = 12
FIT_COND_MAX = 1e8
PARITY_TOL = 1e-4


class OutgoingRegimeLost(RuntimeError):
    pass


class PerturbationRejected(ValueError):
    def __init__(self, field_name: str, order: int, value: float):
        super().__init__(f"perturbation of {field_name} has nonzero R^{order} coefficient {value:.3e}")
        self.field_name = field_name
        self.order = order


# perturbations -----------------------------------------------------------------

@dataclass(frozen=True)
class Bump:
    """``amplitude * R^(2 power) * (g(R - center) + g(R + center)) / 2`` with ``g(x) = exp(-x^2/width^2)``."""

    field: str
    amplitude: float
    center: float = 0.0
    width: float = 1.0
    power: int = 0

    def __call__(self, R):
        R = np.asarray(R, dtype=float)
        w2 = self.width**2
        g = 0.5 * (np.exp(-((R - self.center) ** 2) / w2) + np.exp(-((R + self.center) ** 2) / w2))
        return self.amplitude * R ** (2 * self.power) * g

    def taylor(self, order: int) -> np.ndarray:
        """Coefficients of ``R^0, R^2, ..., R^(2 order)``."""
        w2 = self.width**2
        c = self.center
        # exp(-c^2/w^2) * exp(-R^2/w^2) * cosh(2 c R / w^2)
        e = np.array([(-1) ** j / (w2**j * math.factorial(j)) for j in range(order + 1)])
        h = np.array([(2 * c / w2) ** (2 * m) / math.factorial(2 * m) for m in range(order + 1)])
        prod = np.convolve(e, h)[: order + 1] * math.exp(-c * c / w2)
        out = np.zeros(order + 1)
        if self.power <= order:
            out[self.power:] = prod[: order + 1 - self.power]
        return self.amplitude * out


@dataclass(frozen=True)
class Perturbation:
    bumps: tuple[Bump, ...] = ()

    def evaluate(self, name: str, R) -> np.ndarray:
        R = np.asarray(R, dtype=float)
        out = np.zeros_like(R)
        for b in self.bumps:
            if b.field == name:
                out = out + b(R)
        return out

    def taylor(self, name: str, order: int) -> np.ndarray:
        out = np.zeros(order + 1)
        for b in self.bumps:
            if b.field == name:
                out = out + b.taylor(order)
        return out

    def scaled(self, eps: float) -> "Perturbation":
        return Perturbation(tuple(replace(b, amplitude=b.amplitude * eps) for b in self.bumps))

    def to_text(self) -> str:
        return "; ".join(f"{b.field} {b.amplitude!r} {b.center!r} {b.width!r} {b.power}" for b in self.bumps)


_FIELDS = ("V", "Q", "K")


def parse_perturbation(text: str) -> Perturbation:
    """Parse ``"V 1e-3 0 1; Q 1e-3 0 1 [power]; ..."``.  Empty text means no perturbation."""
    bumps = []
    for part in re.split(r"[;\n]", text or ""):
        part = part.strip()
        if not part or part.startswith("#"):
            continue
        tok = part.split()
        if tok[0] not in _FIELDS or not 2 <= len(tok) <= 5:
            raise ValueError(f"bad perturbation term {part!r}; expected 'FIELD amplitude [center [width [power]]]'")
        nums = [float(x) for x in tok[1:4]]
        power = int(tok[4]) if len(tok) == 5 else 0
        amp, center, width = (nums + [0.0, 1.0][len(nums) - 1:])[:3]
        if width <= 0 or power < 0:
            raise ValueError(f"bad width or power in {part!r}")
        bumps.append(Bump(tok[0], amp, center, width, power))
    return Perturbation(tuple(bumps))


def gaussian_bump(eps: float, width: float = 1.0) -> Perturbation:
    return Perturbation(tuple(Bump(f, eps, 0.0, width) for f in _FIELDS))


def check_vanishing(pert: Perturbation, N: int, rtol: float = 1e-12) -> None:
    """Orders ``R^2 .. R^(2N-2)`` must vanish for ``N >= 2``."""
    if N < 2:
        return
    for name in _FIELDS:
        t = pert.taylor(name, N - 1)
        scale = max([abs(b.amplitude) for b in pert.bumps if b.field == name] + [1e-300])
        for j in range(1, N):
            if abs(t[j]) > rtol * scale:
                raise PerturbationRejected(name, 2 * j, t[j])


# grid and discrete operators ---------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    cells: int
    R_out: float
    A: float
    B: float
    xi: np.ndarray
    R: np.ndarray
    jac: np.ndarray  # R d(xi)/dR, so that D = jac * d/dxi
    centred_cells: int = 0

    @property
    def dxi(self) -> float:
        return 1.0 / self.cells

    @property
    def min_dlogR(self) -> float:
        return float(np.min(np.diff(np.log(self.R))))


def make_grid(cells: int = 512, R_out: float = 50.0, A: float = 0.5, centred_cells: int = 0) -> Grid:
    if cells < 16:
        raise ValueError("need at least 16 cells")
    B = math.asinh(R_out / A)
    xi = (np.arange(cells) + 0.5) / cells
    R = A * np.sinh(B * xi)
    return Grid(cells, R_out, A, B, xi, R, np.tanh(B * xi) / B, min(centred_cells, cells - 4))


def rdr(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``R df/dR`` for even ``f`` sampled on the grid; works on the last axis."""
    h = grid.dxi
    ghost = f[..., 1::-1]  # f(-xi_1), f(-xi_0) in that order
    g = np.concatenate([ghost, f], axis=-1)  # index shift of 2
    d = np.empty_like(f)
    # upwind-biased third order: (f_{i-2} - 6 f_{i-1} + 3 f_i + 2 f_{i+1}) / 6h
    d[..., :-1] = (g[..., :-3] - 6 * g[..., 1:-2] + 3 * g[..., 2:-1] + 2 * g[..., 3:]) / (6 * h)
    # outflow cell: one-sided third order
    d[..., -1] = (11 * f[..., -1] - 18 * f[..., -2] + 9 * f[..., -3] - 2 * f[..., -4]) / (6 * h)
    # near R = 0 the speed in xi vanishes; a centred stencil keeps D f exactly even
    m = grid.centred_cells
    if m:
        d[..., :m] = (g[..., :m] - 8 * g[..., 1:m + 1] + 8 * g[..., 3:m + 3] - g[..., 4:m + 4]) / (12 * h)
    return grid.jac * d


# Taylor record --------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorRecord:
    """Even Taylor coefficients at ``R = 0`` of the perturbation (state minus profile)."""

    v: np.ndarray  # coefficients of R^0, R^2, ...
    q: np.ndarray
    k: np.ndarray
    N: int
    condition: float
    parity_residual: float  # relative to the fitted values
    parity_absolute: float = 0.0

    @property
    def zeroth(self) -> tuple[float, float, float]:
        return float(self.v[0]), float(self.q[0]), float(self.k[0])

    @property
    def resonant(self) -> tuple[float, float, float]:
        return float(self.v[self.N]), float(self.q[self.N]), float(self.k[self.N])

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > FIT_COND_MAX

    @property
    def parity_violation(self) -> bool:
        return self.parity_residual > PARITY_TOL


class _Fitter:
    def __init__(self, grid: Grid, N: int, degree: int | None = None, cells: int = FIT_CELLS):
        degree = N + 1 if degree is None else degree
        if degree + 1 > cells:
            raise ValueError("fit degree exceeds stencil support")
        self.N, self.degree, self.cells = N, degree, cells
        x = grid.R[:cells] ** 2
        self.x_scale = float(x[-1])
        Vd = np.vander(x / self.x_scale, degree + 1, increasing=True)
        self.condition = float(np.linalg.cond(Vd))
        self.pinv = np.linalg.pinv(Vd)
        self.unscale = self.x_scale ** -np.arange(degree + 1)
        self.Vd = Vd

    def coefficients(self, vals: np.ndarray) -> np.ndarray:
        """``vals`` has shape (fields, cells); returns (fields, degree + 1)."""
        return (vals[:, : self.cells] @ self.pinv.T) * self.unscale

    def record(self, dv, dq, dk) -> TaylorRecord:
        vals = np.stack([dv[: self.cells], dq[: self.cells], dk[: self.cells]])
        c = (vals @ self.pinv.T)
        resid = vals - c @ self.Vd.T
        scale = np.max(np.abs(vals), axis=1) + 1e-300
        rms = np.sqrt(np.mean(resid**2, axis=1))
        c = c * self.unscale
        return TaylorRecord(c[0], c[1], c[2], self.N, self.condition, float(np.max(rms / scale)), float(np.max(rms)))


def taylor_record(state: "EvolutionState", order: int | None = None, absolute: bool = False) -> TaylorRecord:
    """Least-squares even fit on the innermost cells; ``order`` is the highest power of ``R^2``.

    Fits the perturbation by default, or the fields themselves with ``absolute``.
    """
    sim = state.sim
    if order is not None and order != sim.fitter.degree:
        if order < sim.exp.N:
            raise ValueError("order must reach the resonant power 2N")
        fitter = _Fitter(sim.grid, sim.exp.N, order)
    else:
        fitter = sim.fitter
    if absolute:
        return fitter.record(state.V, state.Q, state.K)
    return fitter.record(state.V - sim.Vbar, state.Q - sim.Qbar, state.K - sim.Kbar)


# modulation --------------------------------------------------------------------------------

@dataclass(frozen=True)
class Modulation:
    c_r: float
    c_u: float
    c_b: float
    tilde: tuple[float, float, float]


class _Closure:
    """Maps the Taylor record to the modulation functions."""

    def __init__(self, exp: Exponents):
        self.exp = exp
        P = np.column_stack([p for _, p in a1_eigensystem(exp.params)])
        self.P = P
        self.Pinv = np.linalg.inv(P)
        a, g, d, v0, q0 = exp.alpha, exp.gamma, exp.d, exp.v0, exp.q0
        self.lam0 = 2 * a * d / (1 + a * d)
        self.cu_q = 4 * a * a / g * q0 / v0
        self.cu_v = (1 + v0) / v0

    def __call__(self, rec: TaylorRecord) -> Modulation:
        e = self.exp
        v0t, q0t, k0t = rec.zeroth
        vN, qN, kN = rec.resonant
        phi_dag = float(self.Pinv[2] @ np.array([qN, vN, kN]))
        cr_t = e.kappa * phi_dag - v0t
        cu_t = e.kappa * phi_dag + self.cu_q * q0t - self.cu_v * v0t
        cb_t = e.kappa * phi_dag - self.lam0 * k0t
        return Modulation(e.c_r + cr_t, e.c_r - 1 + cu_t, e.c_b + cb_t, (cr_t, cu_t, cb_t))


# simulator ---------------------------------------------------------------------------------

@dataclass
class Simulator:
    exp: Exponents
    grid: Grid
    Vbar: np.ndarray
    Qbar: np.ndarray
    Kbar: np.ndarray
    fitter: _Fitter
    closure: _Closure
    Ybar: np.ndarray = field(repr=False, default=None)
    balance: np.ndarray | None = field(repr=False, default=None)

    def rhs(self, V, Q, K, balanced: bool = True):
        rec = self.fitter.record(V - self.Vbar, Q - self.Qbar, K - self.Kbar)
        mod = self.closure(rec)
        rates = self._rhs_with(V, Q, K, mod)
        if balanced and self.balance is not None:
            rates = tuple(r - b for r, b in zip(rates, self.balance))
        return rates, mod, rec

    def _rhs_with(self, V, Q, K, mod: Modulation):
        e = self.exp
        a, g, d = e.alpha, e.gamma, e.d
        D = rdr(self.grid, np.stack([V, Q, K]))
        DV, DQ, DK = D
        w = mod.c_r + V
        s = mod.c_r - mod.c_u
        Qt = -((s + (1 + a * d) * V) * Q + w * DQ + a * Q * DV)
        Vt = -(s * V + V * V + (2 * a * a / g) * Q * Q + w * DV + a * Q * DQ - (a / g) * Q * Q * DK)
        Kt = -((mod.c_r - mod.c_b + V) + w * DK)
        return Vt, Qt, Kt


@dataclass(frozen=True)
class EvolutionState:
    tau: float
    V: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    modulation: Modulation
    taylor: TaylorRecord
    sim: Simulator = field(repr=False, compare=False)

    @property
    def grid(self) -> Grid:
        return self.sim.grid

    @property
    def R(self) -> np.ndarray:
        return self.sim.grid.R

    def perturbation(self):
        s = self.sim
        return self.V - s.Vbar, self.Q - s.Qbar, self.K - s.Kbar

    @property
    def H(self) -> np.ndarray:
        return np.exp(self.K)


def make_simulator(table: ProfileTable, exp: Exponents | None = None, cells: int = 512,
                   R_out: float = 50.0, A: float = 0.5, balanced: bool = True) -> Simulator:
    """Sample the profile on the grid.

    With ``balanced`` the discrete residual of the sampled profile is
    subtracted from every right-hand side, so the profile is an exact discrete
    equilibrium and perturbations are measured against it without the
    truncation-error drift of the plain scheme.
    """
    exp = table.exp if exp is None else exp
    if R_out > table.R_max:
        raise ValueError("R_out beyond the profile table")
    grid = make_grid(cells, R_out, A)
    V, Q, _, _ = profile_at(table, grid.R)
    K = np.log(entropy_at(table, grid.R))
    sim = Simulator(exp, grid, V, Q, K, _Fitter(grid, exp.N), _Closure(exp))
    sim.Ybar = _riemann(sim, V, Q, K)
    if balanced:
        sim.balance, _, _ = sim.rhs(V, Q, K, balanced=False)
    return sim


def init_state(table: ProfileTable, entropy=None, exp: Exponents | None = None,
               perturbation: Perturbation | str | None = None, sim: Simulator | None = None,
               **grid_kw) -> EvolutionState:
    """Profile plus perturbation on the grid.  ``entropy`` is accepted for symmetry
    with the other entry points; ``K`` is sampled by direct quadrature."""
    exp = table.exp if exp is None else exp
    if isinstance(perturbation, str):
        perturbation = parse_perturbation(perturbation)
    perturbation = perturbation or Perturbation()
    check_vanishing(perturbation, exp.N)
    sim = sim or make_simulator(table, exp, **grid_kw)
    R = sim.grid.R
    V = sim.Vbar + perturbation.evaluate("V", R)
    Q = sim.Qbar + perturbation.evaluate("Q", R)
    K = sim.Kbar + perturbation.evaluate("K", R)
    if np.any(Q <= 0):
        raise ValueError("perturbed Q must stay positive")
    rec = sim.fitter.record(V - sim.Vbar, Q - sim.Qbar, K - sim.Kbar)
    return EvolutionState(0.0, V, Q, K, sim.closure(rec), rec, sim)


def max_speed(state: EvolutionState) -> float:
    e = state.sim.exp
    return float(np.max(state.modulation.c_r + state.V + e.alpha * np.abs(state.Q)))


def stable_dtau(state: EvolutionState, cfl: float = 0.5) -> float:
    return cfl * state.grid.min_dlogR / max_speed(state)


def min_outgoing_speed(state: EvolutionState) -> float:
    e = state.sim.exp
    return float(np.min(state.modulation.c_r + state.V - e.alpha * state.Q))


def step(state: EvolutionState, dtau: float, cfl: float = 0.5) -> EvolutionState:
    """One SSP-RK3 step; the modulation is refreshed at every stage."""
    sim = state.sim
    if dtau * max_speed(state) / state.grid.min_dlogR > cfl * (1 + 1e-12):
        raise ValueError("time step violates the CFL bound")
    if min_outgoing_speed(state) <= 0:
        raise OutgoingRegimeLost(f"c_r + V - aQ <= 0 at tau={state.tau:.4g}")
    u0 = (state.V, state.Q, state.K)
    k1, _, _ = sim.rhs(*u0)
    u1 = tuple(u + dtau * k for u, k in zip(u0, k1))
    k2, _, _ = sim.rhs(*u1)
    u2 = tuple(0.75 * a + 0.25 * (b + dtau * k) for a, b, k in zip(u0, u1, k2))
    k3, _, _ = sim.rhs(*u2)
    V, Q, K = (a / 3 + 2 / 3 * (b + dtau * k) for a, b, k in zip(u0, u2, k3))
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(Q)) and np.all(np.isfinite(K))):
        raise FloatingPointError(f"non-finite state at tau={state.tau + dtau:.4g}")
    rec = sim.fitter.record(V - sim.Vbar, Q - sim.Qbar, K - sim.Kbar)
    return EvolutionState(state.tau + dtau, V, Q, K, sim.closure(rec), rec, sim)


def stationary_residual(state: EvolutionState, balanced: bool = False) -> float:
    """``max |d/dtau (V, Q, K)|`` with the current modulation (plain scheme by default)."""
    rates, _, _ = state.sim.rhs(state.V, state.Q, state.K, balanced=balanced)
    return float(max(np.max(np.abs(r)) for r in rates))


# Riemann-type variables ----------------------------------------------------------------------

def _riemann(sim: Simulator, V, Q, K) -> np.ndarray:
    e = sim.exp
    DV, DQ, DK = rdr(sim.grid, np.stack([V, Q, K]))
    W = DV + DQ - Q * DK / e.gamma
    Z = DV - DQ + Q * DK / e.gamma
    Ar = e.alpha / e.gamma * Q * DK
    return np.stack([Z, Ar, W])


@dataclass(frozen=True)
class RiemannDiagnostics:
    Z: np.ndarray
    A: np.ndarray
    W: np.ndarray
    weighted_sup: float  # sup <R>^theta |Y - Ybar|
    theta: float
    min_speed: float


def riemann_diagnostics(state: EvolutionState) -> RiemannDiagnostics:
    sim = state.sim
    Y = _riemann(sim, state.V, state.Q, state.K)
    theta = 0.5 * min(1.0, 1.0 / sim.exp.c_r)
    weight = (1 + state.R**2) ** (theta / 2)
    sup = float(np.max(weight * np.max(np.abs(Y - sim.Ybar), axis=0)))
    return RiemannDiagnostics(Y[0], Y[1], Y[2], sup, theta, min_outgoing_speed(state))


def reconstruct_K(state: EvolutionState, diag: RiemannDiagnostics | None = None) -> np.ndarray:
    """Integrate ``gamma A / (a Q) = R dK/dR`` outward from the first cell (Simpson in ``xi``)."""
    diag = diag or riemann_diagnostics(state)
    e = state.sim.exp
    g = state.grid
    dK_dxi = e.gamma * diag.A / (e.alpha * state.Q) / g.jac
    return state.K[0] + cumulative_simpson(dK_dxi, dx=g.dxi, initial=0.0)


# runs -------------------------------------------------------------------------------------------

TRACKED = ("v0", "q0", "k0", "vN", "qN", "kN", "cr", "cu", "cb", "Y", "sup")


@dataclass
class EvolutionRun:
    exp: Exponents
    eps: float
    perturbation: Perturbation
    tau: np.ndarray
    series: dict  # name -> array over tau
    modulation: np.ndarray  # (steps, 3) of c_r, c_u, c_b
    min_speed: float
    max_parity: float
    snapshots: list
    final: EvolutionState = field(repr=False, default=None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# schema", SCHEMA_VERSION])
        w.writerow(["tau", *TRACKED, "c_r", "c_u", "c_b"])
        for i, t in enumerate(self.tau):
            w.writerow([repr(float(t))] + [repr(float(self.series[k][i])) for k in TRACKED]
                       + [repr(float(x)) for x in self.modulation[i]])
        return buf.getvalue()


def _record(state: EvolutionState) -> tuple[dict, float]:
    dv, dq, dk = state.perturbation()
    v0, q0, k0 = state.taylor.zeroth
    vN, qN, kN = state.taylor.resonant
    diag = riemann_diagnostics(state)
    cr, cu, cb = state.modulation.tilde
    vals = dict(v0=v0, q0=q0, k0=k0, vN=vN, qN=qN, kN=kN, cr=cr, cu=cu, cb=cb, Y=diag.weighted_sup,
                sup=float(max(np.max(np.abs(dv)), np.max(np.abs(dq)))))
    return vals, diag.min_speed


def run_evolution(table: ProfileTable, exp: Exponents | None = None, perturbation=None,
                  tau_end: float = 30.0, cfl: float = 0.5, cells: int = 512, R_out: float = 50.0,
                  record_every: int = 10, snapshot_taus=(), sim: Simulator | None = None) -> EvolutionRun:
    exp = table.exp if exp is None else exp
    state = init_state(table, exp=exp, perturbation=perturbation, sim=sim, cells=cells, R_out=R_out) \
        if sim is None else init_state(table, exp=exp, perturbation=perturbation, sim=sim)
    pert = perturbation if isinstance(perturbation, Perturbation) else parse_perturbation(perturbation or "")
    eps = max([abs(b.amplitude) for b in pert.bumps] + [0.0])
    dtau = stable_dtau(state, cfl) * 0.9
    n_steps = int(math.ceil(tau_end / dtau))
    dtau = tau_end / n_steps
    taus, rows, mods = [], [], []
    min_speed = math.inf
    max_par = 0.0
    snaps = []
    pending = sorted(snapshot_taus)
    for i in range(n_steps + 1):
        if i % record_every == 0 or i == n_steps:
            vals, ms = _record(state)
            taus.append(state.tau)
            rows.append(vals)
            mods.append((state.modulation.c_r, state.modulation.c_u, state.modulation.c_b))
            min_speed = min(min_speed, ms)
            if eps > 0:
                # absolute, so a perturbation decayed to roundoff does not read as odd
                max_par = max(max_par, state.taylor.parity_absolute / eps)
        while pending and state.tau >= pending[0] - 1e-12:
            snaps.append(state)
            pending.pop(0)
        if i < n_steps:
            state = step(state, dtau, cfl)
    series = {k: np.array([r[k] for r in rows]) for k in TRACKED}
    return EvolutionRun(exp, eps, pert, np.array(taus), series, np.array(mods), min_speed, max_par, snaps, state)


def field_dump_csv(state: EvolutionState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# schema", SCHEMA_VERSION, "tau", repr(state.tau)])
    w.writerow(["R", "V", "Q", "K", "H"])
    for row in zip(state.R, state.V, state.Q, state.K, state.H):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


# decay fits -----------------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    name: str
    rate: float
    window: tuple[float, float]
    monotone: bool


@dataclass(frozen=True)
class DecayReport:
    fits: dict
    lambda_floor: float
    run_length: float

    @property
    def worst(self) -> RateFit:
        return min(self.fits.values(), key=lambda f: f.rate)

    def as_dict(self) -> dict:
        return {
            "lambda_floor": self.lambda_floor,
            "run_length": self.run_length,
            "rates": {k: {"rate": f.rate, "window": list(f.window), "monotone": f.monotone} for k, f in self.fits.items()},
        }


def _envelope(y: np.ndarray) -> np.ndarray:
    """``sup_{tau' >= tau} |y(tau')|``: a nonincreasing majorant robust to sign changes."""
    return np.maximum.accumulate(np.abs(y)[::-1])[::-1]


def decay_report(run: EvolutionRun, floors: dict | None = None, tau_min: float = 1.0,
                 floor_factor: float = 10.0, names=TRACKED) -> DecayReport:
    """Log-linear fits of each tracked quantity's envelope against ``tau``.

    The fit window starts at ``tau_min`` and ends where the envelope first
    drops below ``floor_factor`` times the larger of that quantity's floor (the
    level reached by an unperturbed run, or ``1e-13`` if none is given) and
    its terminal plateau.
    """
    lam = decay_floor(run.exp)
    fits = {}
    for name in names:
        y = run.series[name]
        env = _envelope(y)
        floor = floor_factor * max((floors or {}).get(name, 1e-13), env[-1])
        ok = (run.tau >= tau_min) & (env > floor)
        if ok.sum() < 3:
            fits[name] = RateFit(name, math.inf, (tau_min, tau_min), True)
            continue
        t, e = run.tau[ok], env[ok]
        slope = np.polyfit(t, np.log(e), 1)[0]
        raw = np.abs(y[ok]) + 1e-300
        tail = raw[len(raw) // 2:]
        monotone = bool(np.all(np.diff(np.log(tail)) <= 1e-9) or np.max(tail) <= 2 * tail[0])
        fits[name] = RateFit(name, float(-slope), (float(t[0]), float(t[-1])), monotone)
    return DecayReport(fits, lam, float(run.tau[-1]))


def floors_from(run: EvolutionRun) -> dict:
    """Per-quantity floors from an unperturbed run."""
    return {k: float(np.max(np.abs(v))) for k, v in run.series.items()}


# config files -------------------------------------------------------------------------------

@dataclass
class EvolveConfig:
    params: GasParams
    cells: int = 512
    R_out: float = 50.0
    R_max: float = 1e4
    cfl: float = 0.5
    tau_end: float = 30.0
    record_every: int = 10
    perturbation: Perturbation = field(default_factory=Perturbation)
    snapshot_taus: tuple = ()

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp["params"] = {"d": str(self.params.d), "gamma": str(self.params.gamma), "N": str(self.params.N)}
        cp["grid"] = {"cells": str(self.cells), "R_out": repr(self.R_out), "R_max": repr(self.R_max)}
        cp["run"] = {"cfl": repr(self.cfl), "tau_end": repr(self.tau_end), "record_every": str(self.record_every),
                     "snapshots": " ".join(repr(float(t)) for t in self.snapshot_taus)}
        cp["perturbation"] = {"terms": self.perturbation.to_text()}
        buf = io.StringIO()
        buf.write(f"# schema {SCHEMA_VERSION}\n")
        cp.write(buf)
        return buf.getvalue()


def parse_evolve_config(text: str) -> EvolveConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    p = cp["params"]
    params = GasParams(int(p["d"]), parse_gamma(p["gamma"]), int(p.get("N", "1")))
    g = cp["grid"] if cp.has_section("grid") else {}
    r = cp["run"] if cp.has_section("run") else {}
    terms = cp["perturbation"].get("terms", "") if cp.has_section("perturbation") else ""
    snaps = tuple(float(x) for x in r.get("snapshots", "").split())
    return EvolveConfig(
        params,
        cells=int(g.get("cells", 512)),
        R_out=float(g.get("R_out", 50.0)),
        R_max=float(g.get("R_max", 1e4)),
        cfl=float(r.get("cfl", 0.5)),
        tau_end=float(r.get("tau_end", 30.0)),
        record_every=int(r.get("record_every", 10)),
        perturbation=parse_perturbation(terms),
        snapshot_taus=snaps,
    )


def run_from_config(cfg: EvolveConfig, table: ProfileTable | None = None) -> EvolutionRun:
    exp = compute_exponents(cfg.params)
    check_vanishing(cfg.perturbation, exp.N)
    table = table or build_profile(exp, R_max=cfg.R_max)
    return run_evolution(table, exp, cfg.perturbation, tau_end=cfg.tau_end, cfl=cfg.cfl, cells=cfg.cells,
                         R_out=cfg.R_out, record_every=cfg.record_every, snapshot_taus=cfg.snapshot_taus)
