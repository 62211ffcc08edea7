"""Power series of the profile at the origin.

Near ``R = 0`` the profile is even and analytic,

    V = sum_n v_n R^(2n),    Q = sum_n q_n R^(2n),

with ``(v_0, q_0)`` the saddle point.  Matching powers of ``R^2`` gives a
linear 2x2 system ``M_n (q_n, v_n) = (F1(n), F2(n))`` whose right side only
involves lower coefficients.  ``M_n`` is singular exactly at ``n = N``; there
the coefficient pair is taken along the kernel, normalised to ``v_N = 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import Exponents


class OutOfRangeError(ValueError):
    """Requested radius lies outside the certified disc of convergence."""


class ExponentInconsistency(RuntimeError):
    """A recursion matrix is singular at an order other than the resonance."""


@dataclass(frozen=True)
class RecursionKernel:
    n: int
    M: np.ndarray
    F1: float
    F2: float
    det: float


def _consts(exp: Exponents):
    a, g, d = exp.alpha, exp.gamma, exp.d
    return a, g, d, exp.kappa, exp.v0, exp.q0


def recursion_matrix(exp: Exponents, n: int) -> np.ndarray:
    a, g, d, k, v0, q0 = _consts(exp)
    return np.array(
        [
            [2 * n * k, (1 + a * d + 2 * a * n) * q0],
            [a * k * q0 * (4 * a / g + 2 * n), 2 * n * k * k + (1 + 2 * v0) * k + (a / g) * q0 * q0],
        ]
    )


def factored_det(exp: Exponents, n):
    """Determinant of ``M_n`` written as ``4 n^2 kappa`` times a quadratic in kappa.

    ``n`` may be an array of orders.
    """
    a, g, d, k, v0, q0 = _consts(exp)
    n = np.asarray(n, dtype=float)
    E_n = a * g * d * (d + 2) / (4 * n) + a * d * (1 + a * d) / (2 * n * n)
    out = 4 * n * n * k * (k * k + k * (1 + 2 * v0) / (2 * n) - v0 * v0 * (a * g * d / 2 + E_n))
    return float(out) if out.ndim == 0 else out


def det_scale(exp: Exponents, n):
    """Magnitude used to normalise determinants (product of the row norms of ``M_n``)."""
    a, g, d, k, v0, q0 = _consts(exp)
    n = np.asarray(n, dtype=float)
    r0 = np.hypot(2 * n * k, (1 + a * d + 2 * a * n) * q0)
    r1 = np.hypot(a * k * q0 * (4 * a / g + 2 * n), 2 * n * k * k + (1 + 2 * v0) * k + (a / g) * q0 * q0)
    out = r0 * r1
    return float(out) if out.ndim == 0 else out


def normalized_det(exp: Exponents, n):
    return factored_det(exp, n) / det_scale(exp, n)


def kernel_direction(exp: Exponents) -> tuple[float, float]:
    """``(q_N, v_N)`` spanning the kernel of ``M_N`` with ``v_N = 1``."""
    a, g, d, k, v0, q0 = _consts(exp)
    N = exp.N
    return -q0 * (1 + a * d + 2 * a * N) / (2 * N * k), 1.0


def _forcing(exp: Exponents, n: int, v: np.ndarray, q: np.ndarray, vv: np.ndarray, vq: np.ndarray):
    """Right-hand sides at order ``n`` from the coefficients below ``n``."""
    a, g, d, k, v0, q0 = _consts(exp)
    if n < 2:
        return 0.0, 0.0
    j = np.arange(1, n)
    m = n - j
    vm, vj, qm, qj = v[m], v[j], q[m], q[j]
    F1 = -np.sum(qm * vj * (1 + a * d + 2 * n - 2 * (1 - a) * j))
    F2 = -np.sum(vm * vj * (1 + exp.c_r + 3 * v0 + 4 * j * k))
    F2 -= np.sum(vm * qj * 2 * a * q0 * (j + 1))
    F2 -= np.sum(qm * qj * k * (2 * a * a / g + 2 * a * j))
    if n >= 3:
        jj = np.arange(1, n - 1)
        s = n - jj
        F2 -= np.sum((2 * jj + 1) * (vv[s] * v[jj] + a * vq[s] * q[jj]))
    return float(F1), float(F2)


def build_kernel(exp: Exponents, n: int, coeffs: "OriginSeries | None" = None) -> RecursionKernel:
    if n < 1:
        raise ValueError("order n must be >= 1")
    F1 = F2 = 0.0
    if coeffs is not None and n <= coeffs.order_max:
        vv, vq = _convolutions(coeffs.v, coeffs.q, n)
        F1, F2 = _forcing(exp, n, coeffs.v, coeffs.q, vv, vq)
    return RecursionKernel(n=n, M=recursion_matrix(exp, n), F1=F1, F2=F2, det=factored_det(exp, n))


def _convolutions(v, q, upto):
    """``(v*v)_s`` and ``(v*q)_s`` over indices >= 1, for ``s < upto``."""
    vv = np.zeros(upto + 1)
    vq = np.zeros(upto + 1)
    for s in range(2, upto):
        i = np.arange(1, s)
        vv[s] = np.dot(v[i], v[s - i])
        vq[s] = np.dot(v[i], q[s - i])
    return vv, vq


@dataclass(frozen=True)
class OriginSeries:
    exp: Exponents
    order_max: int
    v: np.ndarray
    q: np.ndarray
    radius_lb: float
    growth_C: float
    growth_Cprime: float
    radius_is_heuristic: bool = True
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.exp.N

    @property
    def coeffs(self) -> list[tuple[float, float]]:
        return list(zip(self.v.tolist(), self.q.tolist()))

    @property
    def R_switch(self) -> float:
        return min(0.25, 0.5 * self.radius_lb)

    def to_json(self) -> str:
        rows = [
            {"k": k, "v_k": float(self.v[k]), "q_k": float(self.q[k])}
            for k in range(self.order_max + 1)
            if k == 0 or k % self.N == 0
        ]
        return json.dumps(
            {
                "N": self.N,
                "order_max": self.order_max,
                "radius_lb": self.radius_lb,
                "radius_is_heuristic": self.radius_is_heuristic,
                "coefficients": rows,
            },
            indent=2,
        )


def _solve2(M: np.ndarray, rhs) -> tuple[float, float]:
    (a, b), (c, d) = M
    det = a * d - b * c
    x = (d * rhs[0] - b * rhs[1]) / det
    y = (a * rhs[1] - c * rhs[0]) / det
    return x, y


def _fit_growth(v: np.ndarray, q: np.ndarray, N: int) -> tuple[float, float]:
    """Fit ``|c_{kN}| <= C' C^k k^(-3/2)`` on the upper half of the computed orders."""
    kmax = (len(v) - 1) // N
    ks = np.arange(1, kmax + 1)
    mag = np.maximum(np.abs(v[ks * N]), np.abs(q[ks * N]))
    y = np.log(mag) + 1.5 * np.log(ks)
    use = ks >= max(1, kmax // 2)
    if use.sum() >= 2:
        slope, _ = np.polyfit(ks[use], y[use], 1)
    else:
        slope = 0.0
    slope = max(slope, 0.0)
    logCp = np.max(y - slope * ks)
    return math.exp(slope), math.exp(logCp)


def solve_recursion(exp: Exponents, order_max: int | None = None) -> OriginSeries:
    N = exp.N
    if order_max is None:
        order_max = 32 * N
    if order_max < 2 * N:
        raise ValueError(f"order_max must be >= 2N = {2 * N}")
    v = np.zeros(order_max + 1)
    q = np.zeros(order_max + 1)
    v[0], q[0] = exp.v0, exp.q0
    vv = np.zeros(order_max + 1)
    vq = np.zeros(order_max + 1)
    residuals = np.zeros(order_max + 1)
    for n in range(1, order_max + 1):
        if n >= 3:
            i = np.arange(1, n - 1)
            vv[n - 1] = np.dot(v[i], v[n - 1 - i])
            vq[n - 1] = np.dot(v[i], q[n - 1 - i])
        F1, F2 = _forcing(exp, n, v, q, vv, vq)
        M = recursion_matrix(exp, n)
        if n == N:
            q[n], v[n] = kernel_direction(exp)
        else:
            if abs(factored_det(exp, n)) <= 1e-10 * det_scale(exp, n):
                raise ExponentInconsistency(f"recursion matrix singular at n={n} != N={N}")
            q[n], v[n] = _solve2(M, (F1, F2))
        r = M @ np.array([q[n], v[n]]) - np.array([F1, F2])
        scale = np.abs(M) @ np.abs([q[n], v[n]]) + abs(F1) + abs(F2) + 1e-300
        residuals[n] = float(np.max(np.abs(r) / scale))
    C, Cp = _fit_growth(v, q, N)
    radius = 0.5 * C ** (-1.0 / (2 * N)) if C > 0 else math.inf
    return OriginSeries(exp, order_max, v, q, radius, C, Cp, True, residuals)


def evaluate_series(series: OriginSeries, R, check_range: bool = True):
    """Horner evaluation in ``R^2``.  Returns ``(V, Q, dV/dR, dQ/dR)``."""
    R = np.asarray(R, dtype=float)
    if check_range and np.any(R >= series.radius_lb):
        raise OutOfRangeError(f"R={np.max(R)} outside certified radius {series.radius_lb}")
    x = R * R
    V = np.zeros_like(x)
    Q = np.zeros_like(x)
    dV = np.zeros_like(x)
    dQ = np.zeros_like(x)
    # derivative in x of sum c_n x^n, then dR = 2R d/dx
    for n in range(series.order_max, -1, -1):
        V = V * x + series.v[n]
        Q = Q * x + series.q[n]
        if n >= 1:
            dV = dV * x + n * series.v[n]
            dQ = dQ * x + n * series.q[n]
    dV = 2 * R * dV
    dQ = 2 * R * dQ
    return V, Q, dV, dQ


def series_deviation(series: OriginSeries, R):
    """``(V - v0, Q - q0, R dV/dR, R dQ/dR)`` summed without the constant term.

    Keeps full relative accuracy when the deviation is far below machine epsilon
    relative to ``v0``, which happens for large ``N``.
    """
    R = np.asarray(R, dtype=float)
    x = R * R
    dv = np.zeros_like(x)
    dq = np.zeros_like(x)
    rv = np.zeros_like(x)
    rq = np.zeros_like(x)
    for n in range(series.order_max, 0, -1):
        dv = dv * x + series.v[n]
        dq = dq * x + series.q[n]
        rv = rv * x + 2 * n * series.v[n]
        rq = rq * x + 2 * n * series.q[n]
    return dv * x, dq * x, rv * x, rq * x


def tail_remainder_bound(series: OriginSeries, R: float, order: int) -> float:
    """Geometric bound on ``sum_{k > order/N} C' C^k k^(-3/2) R^(2Nk)``."""
    N = series.N
    z = series.growth_C * R ** (2 * N)
    if z >= 1:
        return math.inf
    k0 = order // N + 1
    return series.growth_Cprime * z**k0 * k0 ** (-1.5) / (1 - z)
