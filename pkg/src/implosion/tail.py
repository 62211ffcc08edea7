"""Far-field expansion, entropy profile and sign certificates for the tail.

As ``R -> infinity`` the profile is a power series in ``x = R^(-1/c_r)``,

    V = sum_{n>=1} v_n x^n,    Q = sum_{n>=1} q_n x^n,

fully determined by ``(v_1, q_1)``.  These two numbers are read off the
integrated profile; every higher coefficient follows from a recursion.

The third profile ``H`` solves a linear equation once ``V`` is known and is
obtained by quadrature of ``(V - v0) / (c_r + V)`` in ``log R``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import Exponents
from .origin_series import OriginSeries
from .profile_ode import PhaseField, ProfileTable, profile_at, profile_deviation_at


class InsufficientRange(RuntimeError):
    """Tail fit did not settle over the last decade of the table."""


def tail_beta(exp: Exponents) -> float:
    a, g, d, cr = exp.alpha, exp.gamma, exp.d, exp.c_r
    return (a * a / (g * cr)) * (d / (1 + a * d) + 2 - 2 * cr)


def tail_coefficients(exp: Exponents, v1: float, q1: float, n_max: int = 8):
    """Coefficients ``v_n, q_n`` for ``n <= n_max`` (index 0 unused, zero)."""
    a, g, d, cr = exp.alpha, exp.gamma, exp.d, exp.c_r
    v = np.zeros(n_max + 1)
    q = np.zeros(n_max + 1)
    if n_max >= 1:
        v[1], q[1] = v1, q1
    qq_const = 2 * a * a * cr / g + a / (g * (1 + a * d))
    for n in range(2, n_max + 1):
        j = np.arange(1, n)
        m = n - j
        sq = np.sum((cr * (1 + a * d) - n + (1 - a) * j) * q[m] * v[j])
        sv = np.sum((qq_const - a * m) * q[m] * q[j] + (cr + 1 - 2 * m) * v[m] * v[j])
        if n >= 3:
            for jj in range(1, n - 1):
                for l in range(1, n - jj):
                    mm = n - jj - l
                    sv += (1 - jj / cr) * v[mm] * (v[l] * v[jj] + a * q[l] * q[jj])
        q[n] = sq / (cr * (n - 1))
        v[n] = sv / (cr * (n - 1))
    return v, q


def second_order_closed_form(exp: Exponents, v1: float, q1: float) -> tuple[float, float]:
    """``(v_2, q_2)`` written out directly."""
    a, d, cr = exp.alpha, exp.d, exp.c_r
    v2 = ((cr - 1) / cr) * v1 * v1 - tail_beta(exp) * q1 * q1
    q2 = ((cr * (1 + a * d) - 1 - a) / cr) * q1 * v1
    return v2, q2


def eval_tail(exp: Exponents, v, q, R, n_terms: int | None = None):
    """Partial sums through ``x^n_terms``."""
    x = np.asarray(R, dtype=float) ** (-1.0 / exp.c_r)
    n_terms = len(v) - 1 if n_terms is None else n_terms
    V = np.zeros_like(x)
    Q = np.zeros_like(x)
    for n in range(n_terms, 0, -1):
        V = (V + v[n]) * x
        Q = (Q + q[n]) * x
    return V, Q


@dataclass
class TailSeries:
    exp: Exponents
    v1: float
    q1: float
    h1: float
    v: np.ndarray
    q: np.ndarray
    n_max: int
    window: tuple[float, float]
    drift: float
    raw_drift: float
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def beta(self) -> float:
        return tail_beta(self.exp)

    def evaluate(self, R, n_terms: int | None = None):
        return eval_tail(self.exp, self.v, self.q, R, n_terms)

    def to_json(self, certificates: dict | None = None) -> str:
        return json.dumps(
            {
                "v1": self.v1,
                "q1": self.q1,
                "h1": self.h1,
                "beta": self.beta,
                "drift": self.drift,
                "window": list(self.window),
                "certificates": certificates or {},
            },
            indent=2,
            default=_jsonable,
        )


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _invert_tail(exp, V, Q, R, n_max, guess, iters: int = 30):
    """Leading pair ``(v1, q1)`` whose truncated tail series hits ``(V, Q)`` at ``R``.

    Newton iteration; the map is a small perturbation of the identity in the
    scaled variables ``R^(1/c_r) (V, Q)``.
    """
    scale = R ** (1 / exp.c_r)
    target = np.array([V, Q]) * scale

    def image(p):
        v, q = tail_coefficients(exp, p[0], p[1], n_max)
        Vs, Qs = eval_tail(exp, v, q, R)
        return np.array([Vs, Qs]) * scale

    p = np.array(guess, dtype=float)
    for _ in range(iters):
        f = image(p) - target
        h = 1e-7 * max(1.0, float(np.max(np.abs(p))))
        J = np.column_stack([(image(p + h * e) - image(p - h * e)) / (2 * h) for e in np.eye(2)])
        step = np.linalg.solve(J, f)
        p = p - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, float(np.max(np.abs(p)))):
            break
    return p


def fit_tail(
    table: ProfileTable,
    exp: Exponents | None = None,
    n_max: int = 8,
    entropy: "EntropyProfile | None" = None,
    drift_limit: float = 1e-3,
    samples: int = 17,
    strict: bool = True,
) -> TailSeries:
    """Leading tail coefficients from the last decade of the table.

    Each sample in the window is matched by the truncated tail series, which
    removes the slowly decaying corrections that bias the raw asymptote
    ``R^(1/c_r) (V, Q)``.  The reported value is the median over the window
    and ``drift`` its relative spread.
    """
    exp = exp or table.exp
    if table.R_max < 1e3:
        raise ValueError("table must reach R_max >= 1e3")
    lo, hi = table.R_max / 10, table.R_max
    Rw = np.logspace(np.log10(lo), np.log10(hi), samples)
    V, Q, _, _ = profile_at(table, Rw)
    scale = Rw ** (1 / exp.c_r)
    raw = np.stack([V * scale, Q * scale], axis=1)
    fitted = np.array([_invert_tail(exp, V[i], Q[i], Rw[i], n_max, raw[i]) for i in range(samples)])
    v1, q1 = np.median(fitted, axis=0)

    def spread(a):
        return float(max(np.ptp(a[:, 0]) / abs(np.median(a[:, 0])), np.ptp(a[:, 1]) / abs(np.median(a[:, 1]))))

    drift = spread(fitted)
    raw_drift = spread(raw)
    if strict and drift > drift_limit:
        raise InsufficientRange(f"tail fit drift {drift:.2e} exceeds {drift_limit:.0e}; increase R_max")
    v, q = tail_coefficients(exp, float(v1), float(q1), n_max)
    if entropy is None:
        entropy = build_entropy(table, exp)
    h1 = entropy_tail_constant(table, entropy, v, q)
    return TailSeries(exp, float(v1), float(q1), h1, v, q, n_max, (lo, hi), drift, raw_drift, fitted)


# entropy profile ------------------------------------------------------------

@dataclass
class EntropyProfile:
    R: np.ndarray
    H: np.ndarray
    dlogH: np.ndarray  # R d(log H)/dR
    logH: np.ndarray

    def at(self, R):
        """Interpolate ``log H`` linearly in ``log R`` (diagnostic use only)."""
        R = np.asarray(R, dtype=float)
        return np.exp(np.interp(np.log(np.maximum(R, 1e-300)), np.log(np.maximum(self.R, 1e-300)), self.logH))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "H", "dlogH"])
        for row in zip(self.R, self.H, self.dlogH):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _series_log_integrand(series: OriginSeries):
    """Coefficients ``g_n`` of ``(V - v0)/(c_r + V) = sum g_n R^(2n)``."""
    kappa = series.exp.kappa
    dv = series.v.copy()
    dv[0] = 0.0
    g = np.zeros_like(dv)
    for n in range(1, len(dv)):
        g[n] = (dv[n] - np.dot(dv[1:n], g[n - 1:0:-1])) / kappa
    return g


def series_log_entropy(series: OriginSeries, R) -> np.ndarray:
    """``log H`` on the origin patch, integrated term by term."""
    g = _series_log_integrand(series)
    x = np.asarray(R, dtype=float) ** 2
    acc = np.zeros_like(x)
    for n in range(len(g) - 1, 0, -1):
        acc = (acc + g[n] / (2 * n)) * x
    return -acc


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _log_entropy_increments(table: ProfileTable, R_nodes: np.ndarray) -> np.ndarray:
    """``-int (V - v0)/(c_r + V) ds`` over consecutive panels of ``R_nodes``."""
    s = np.log(R_nodes)
    a, b = s[:-1], s[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    dv, _ = profile_deviation_at(table, np.exp(pts.ravel()))
    f = (dv / (table.exp.c_r + table.exp.v0 + dv)).reshape(pts.shape)
    return -(f @ _GL_W) * half


def build_entropy(table: ProfileTable, exp: Exponents | None = None) -> EntropyProfile:
    exp = exp or table.exp
    R = table.R
    logH = np.empty_like(R)
    inner = R < table.R_switch
    logH[inner] = series_log_entropy(table.series, R[inner])
    outer_idx = np.flatnonzero(~inner)
    Ro = R[outer_idx]
    start = series_log_entropy(table.series, np.array([table.R_switch]))[0]
    inc = _log_entropy_increments(table, np.concatenate([[table.R_switch], Ro]))
    logH[outer_idx] = start + np.cumsum(inc)
    dlogH = -(table.V - exp.v0) / (exp.c_r + table.V)
    return EntropyProfile(R.copy(), np.exp(logH), dlogH, logH)


def entropy_at(table: ProfileTable, R) -> np.ndarray:
    """``H`` at arbitrary radii within the table, by direct quadrature."""
    R = np.atleast_1d(np.asarray(R, dtype=float))
    out = np.empty_like(R)
    lo = R < table.R_switch
    out[lo] = np.exp(series_log_entropy(table.series, R[lo]))
    if np.any(~lo):
        Rh = R[~lo]
        order = np.argsort(Rh)
        nodes = np.concatenate([[table.R_switch], Rh[order]])
        # subdivide long panels so the 8-point rule stays accurate
        fine = _refine_nodes(nodes, table)
        inc = _log_entropy_increments(table, fine)
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        pos = np.searchsorted(fine, nodes[1:])
        vals = series_log_entropy(table.series, np.array([table.R_switch]))[0] + cum[pos]
        tmp = np.empty_like(Rh)
        tmp[order] = np.exp(vals)
        out[~lo] = tmp
    return out


def _refine_nodes(nodes, table):
    grid = table.R[table.R >= table.R_switch]
    merged = np.union1d(nodes, grid[(grid >= nodes[0]) & (grid <= nodes[-1])])
    return merged


def entropy_tail_constant(table: ProfileTable, entropy: EntropyProfile, v, q) -> float:
    """``lim R^((c_r - c_b)/c_r) H`` via the integral over ``[1, infinity)``.

    The part beyond ``R_max`` uses the tail series, integrated in
    ``x = R^(-1/c_r)``.
    """
    exp = table.exp
    cr, kap = exp.c_r, exp.kappa
    H1 = entropy_at(table, np.array([1.0]))[0]
    nodes = table.R[(table.R > 1.0)]
    nodes = np.concatenate([[1.0], nodes])
    s = np.log(nodes)
    a, b = s[:-1], s[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    V, _, _, _ = profile_at(table, np.exp(pts.ravel()))
    f = (kap * V / (cr * (cr + V))).reshape(pts.shape)
    inner = float(np.sum((f @ _GL_W) * half))
    x_max = table.R_max ** (-1 / cr)
    xs = x_max * (_GL_X + 1) / 2
    Vt, _ = eval_tail(exp, v, q, xs ** (-cr))
    # ds = -c_r dx / x cancels the 1/c_r of the integrand
    outer = float(np.sum(_GL_W * kap * Vt / ((cr + Vt) * xs)) * x_max / 2)
    return H1 * math.exp(-(inner + outer))


def entropy_tail_slope(entropy: EntropyProfile, R_lo: float, R_hi: float) -> float:
    """Log-log slope of ``H`` between two table radii."""
    i = int(np.argmin(np.abs(entropy.R - R_lo)))
    j = int(np.argmin(np.abs(entropy.R - R_hi)))
    return float((entropy.logH[j] - entropy.logH[i]) / (np.log(entropy.R[j]) - np.log(entropy.R[i])))


# sign certificates for the leading tail coefficient ----------------------------

def barrier_slope(exp: Exponents) -> float:
    """Slope of the straight line through the two fixed points."""
    return exp.v0 / exp.q0


def lower_barrier_direct(exp: Exponents, q) -> np.ndarray:
    """``Delta_V - lambda0 Delta_Q`` evaluated on the line ``V = lambda0 Q``."""
    lam = barrier_slope(exp)
    f = PhaseField(exp)
    q = np.asarray(q, dtype=float)
    V = lam * q
    return f.Delta_V(V, q) - lam * f.Delta_Q(V, q)


def lower_barrier_factored(exp: Exponents, q) -> np.ndarray:
    """Same quantity in product form; every factor is positive for ``0 < q < q0``."""
    a, d = exp.alpha, exp.d
    s = 1 - np.asarray(q, dtype=float) / exp.q0
    av0 = abs(exp.v0)
    A = exp.kappa + s * av0
    c1 = (d * d + 2 * (d - 1) * (1 + a * d)) / (2 * (1 + a * d) ** 2)
    c2 = d / (2 * (1 + a * d) ** 3)
    return a * av0 * s * (1 - s) ** 2 * (c1 * A + c2 * (1 - s))


def upper_barrier_coefficients(exp: Exponents) -> tuple[float, float, float]:
    a, g, d = exp.alpha, exp.gamma, exp.d
    mu = exp.c_r / abs(exp.v0)
    mu0 = ((1 + 2 * a * d) / 2) * mu * mu - ((2 + g * d) * a * d / 4) * mu
    mu1 = (1 - a + 2 * a * d) * mu - a * g * d * d / 4
    mu2 = (1 + 2 * a * (d - 1)) / 2
    return mu0, mu1, mu2


def upper_barrier_polynomial(exp: Exponents, s) -> np.ndarray:
    mu0, mu1, mu2 = upper_barrier_coefficients(exp)
    t = (1 - np.asarray(s, dtype=float)) ** 2
    return mu0 - mu1 * t + mu2 * t * t


def delta_v_on_axis(exp: Exponents, Q) -> np.ndarray:
    """``Delta_V`` at ``V = 0``; equals ``c_r^2 Q^2 beta``."""
    return PhaseField(exp).Delta_V(0.0, np.asarray(Q, dtype=float))


@dataclass
class CertificateReport:
    lower_ok: bool
    lower_min: float
    lower_factored_vs_direct: float
    profile_above_line: bool
    kernel_above_line: float
    beta: float
    branch: str
    upper_ok: bool | None
    upper_min: float | None
    v1_sign_certified: bool
    fitted_v1: float | None
    violations: list

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_v1_certificates(table: ProfileTable | None, exp: Exponents, grid: int = 1000,
                           v1: float | None = None) -> CertificateReport:
    """Grid checks of the two barriers that pin the sign of the leading tail coefficient."""
    violations = []
    s = (np.arange(grid) + 0.5) / grid
    qs = exp.q0 * (1 - s)
    fac = lower_barrier_factored(exp, qs)
    direct = lower_barrier_direct(exp, qs)
    agree = float(np.max(np.abs(fac - direct) / (np.abs(direct) + 1e-300)))
    lower_ok = bool(np.all(fac > 0))
    if not lower_ok:
        violations.append(("lower", float(qs[np.argmin(fac)])))
    lam = barrier_slope(exp)
    from .origin_series import kernel_direction

    qN, vN = kernel_direction(exp)
    kernel_gap = vN - lam * qN
    above = True
    if table is not None:
        m = table.R > 0
        gap = table.V[m] - lam * table.Q[m]
        # deviations are below resolution very near the origin for large N
        above = bool(np.all(gap >= -1e-13))
    beta = tail_beta(exp)
    upper_ok = upper_min = None
    if beta < 0:
        branch = "beta<0"
        certified = True
    elif exp.N == 1:
        branch = "N=1 barrier"
        poly = upper_barrier_polynomial(exp, np.concatenate([[0.0], s, [1.0]]))
        upper_min = float(np.min(poly))
        upper_ok = bool(upper_min >= 0)
        if not upper_ok:
            violations.append(("upper", float(np.argmin(poly))))
        certified = upper_ok
    else:
        branch = "no barrier available"
        certified = False
    return CertificateReport(
        lower_ok, float(np.min(fac)), agree, above, float(kernel_gap), beta, branch,
        upper_ok, upper_min, bool(certified and lower_ok), v1, violations,
    )
