"""Linear-stability matrices of the Taylor-coefficient ODEs and their censuses.

Every block is a small (at most 4x4) real matrix built from the parameters and
the similarity exponents.  Two conventions appear:

* generator blocks ``H`` enter as ``x' = H x``;
* damping blocks ``G`` (and the radial ``A`` blocks) enter as ``x' + G x = ...``,
  so their generator is ``-G``.

A census ``(neg, zero, pos)`` always counts eigenvalues of the generator by the
sign of their real part, so ``pos`` counts growing modes.

Entries are assembled as exact rationals.  The only irrational inputs are the
exponent ``kappa`` and, for the radial blocks, ``q0``; both are rounded to
rationals from a 40-digit evaluation.  Characteristic polynomials are then
exact for the rounded matrix, and the Routh table is built in exact arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .exponents import Exponents, GasParams, compute_exponents, resonant_speed

REAL_TOL = 1e-9

DAMPING_KINDS = {"A0", "A1N", "E0_2LE1", "G0", "G0_sym", "G1", "U_vort", "trace_mod", "G1_mod"}
KINDS = DAMPING_KINDS | {"H3", "H_bk", "H2", "H1_1D", "U_scalar"}

SPECIAL_CASES: tuple[tuple[Fraction, int], ...] = (
    (Fraction(5, 3), 3),
    (Fraction(7, 5), 3),
    (Fraction(2), 2),
    (Fraction(5, 3), 2),
    (Fraction(2), 1),
)


class InternalInconsistency(RuntimeError):
    """Two independent routes to the same spectral fact disagree."""


def _mpf_to_fraction(x) -> Fraction:
    if not isinstance(x, mpmath.mpf):
        x = mpmath.mpf(x)
    man, exp = x.man_exp
    man = int(man)
    return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2 ** (-exp))


@dataclass(frozen=True)
class Coefficients:
    """Exact rational inputs shared by all blocks at one parameter point."""

    d: int
    N: int
    alpha: Fraction
    gamma: Fraction
    v0: Fraction
    rho0: Fraction
    kappa: Fraction
    q0: Fraction
    c_r: Fraction

    @property
    def U1(self) -> Fraction:
        return self.v0

    @property
    def B2(self) -> Fraction:
        return Fraction(1)

    @property
    def C1(self) -> float:
        return math.sqrt(float(self.rho0))


@lru_cache(maxsize=4096)
def coefficients(params: GasParams) -> Coefficients:
    a, g, d = params.alpha, params.gamma, params.d
    v0 = -1 / (1 + a * d)
    rho0 = a * d * g / (2 * (1 + a * d) ** 2)  # (alpha q0)^2
    with mpmath.workdps(40):
        cr = resonant_speed(d, g, params.N)
        q0 = mpmath.sqrt(mpmath.mpf(d * g.numerator) / g.denominator / (2 * mpmath.mpf(a.numerator) / a.denominator))
        q0 = q0 / (1 + mpmath.mpf(a.numerator) / a.denominator * d)
        crf = _mpf_to_fraction(cr)
    return Coefficients(d, params.N, a, g, v0, rho0, crf + v0, _mpf_to_fraction(q0), crf)


# block entries -------------------------------------------------------------

def _A0(c: Coefficients, **_):
    a, g, d, q0, v0 = c.alpha, c.gamma, c.d, c.q0, c.v0
    return [[0, (1 + a * d) * q0], [4 * a * a / g * q0, 1 + 2 * v0]]


def _E0(c: Coefficients):
    a, g, d, q0, v0 = c.alpha, c.gamma, c.d, c.q0, c.v0
    return [[0, (1 + a * d) * q0, 0], [4 * a * a / g * q0, 1 + 2 * v0, 0], [0, 1, 0]]


def _E1(c: Coefficients):
    a, g, q0, k = c.alpha, c.gamma, c.q0, c.kappa
    return [[k, a * q0, 0], [a * q0, k, -(a / g) * q0 * q0], [0, 0, k]]


def _E0_2LE1(c: Coefficients, L: int, **_):
    E0, E1 = _E0(c), _E1(c)
    return [[E0[i][j] + 2 * L * E1[i][j] for j in range(3)] for i in range(3)]


def _A1N(c: Coefficients, **_):
    return _E0_2LE1(c, c.N)


def _G0(c: Coefficients, **_):
    a, g, d, r0, U1, B2 = c.alpha, c.gamma, c.d, c.rho0, c.U1, c.B2
    return [[0, 2 * a * r0, 0], [Fraction(2 * d) / g * B2, 1 + 2 * U1, r0 / g], [0, 4 * B2, 0]]


def _G0_sym(c: Coefficients, **_):
    return [[1 + 2 * c.U1, c.rho0 / c.gamma], [4 * c.B2, 0]]


def _G1(c: Coefficients, **_):
    a, g, d, N, r0, U1, B2, k = c.alpha, c.gamma, c.d, c.N, c.rho0, c.U1, c.B2, c.kappa
    return [
        [2 * N * k, a * r0 / (N + 1), 0],
        [2 * (N / a + 2 / g) * (d + 2 * N) * (N + 1) * B2, 2 * N * k + 1 + 2 * U1, 2 * (N + 1) * r0 / g],
        [0, 2 * B2, 2 * N * k],
    ]


def _U_vort(c: Coefficients, **_):
    return [[1 + 2 * c.U1]]


def _trace_mod(c: Coefficients, **_):
    lam = 2 * c.alpha * c.d / (1 + c.alpha * c.d)
    return [[lam if i == j else 0 for j in range(3)] for i in range(3)]


def _G1_mod(c: Coefficients, **_):
    N, k, U1 = c.N, c.kappa, c.U1
    diag = [4 * N * k + 1 + 2 * U1, 2 * N * k, 2 * N * k]
    return [[diag[i] if i == j else 0 for j in range(3)] for i in range(3)]


def _H3(c: Coefficients, k: int, **_):
    a, g, d, r0, U1, B2, kap = c.alpha, c.gamma, c.d, c.rho0, c.U1, c.B2, c.kappa
    n = 2 * k
    return [
        [-n * kap, -2 * a * r0 / (n + 2), 0],
        [-(Fraction(n) / (2 * a) + 2 / g) * (2 * d + 4 * k) * (k + 1) * B2, -n * kap - 2 * U1 - 1, -(n + 2) * r0 / g],
        [0, -2 * B2, -n * kap],
    ]


def _H_bk(c: Coefficients, b: int, k: int, **_):
    a, g, d, r0, U1, B2, kap = c.alpha, c.gamma, c.d, c.rho0, c.U1, c.B2, c.kappa
    n = b + 2 * k
    diag_mid = -n * kap - 2 * U1 - 1
    return [
        [-n * kap, -2 * a * r0, 0, 0],
        [-(d + 2 * b + 2 * (k - 1)) * k * B2 / a - (n / a + 2 * (d + n) / g) * B2, diag_mid, 0, -r0 / g],
        [-(Fraction(n) / (2 * a) + 2 / g) * (2 * d + 4 * b + 4 * k) * (k + 1) * B2, 0, diag_mid, -(n + 2) * r0 / g],
        [0, 0, -2 * B2, -n * kap],
    ]


def _H2(c: Coefficients, n: int, **_):
    return [[-n * c.kappa - 2 * c.U1 - 1, -(n + 2) * c.rho0 / c.gamma], [-2 * c.B2, -n * c.kappa]]


def _U_scalar(c: Coefficients, n: int, **_):
    return [[-n * c.kappa - 2 * c.U1 - 1]]


def _H1_1D(c: Coefficients, n: int, **_):
    a, g, r0, U1, B2, kap = c.alpha, c.gamma, c.rho0, c.U1, c.B2, c.kappa
    return [
        [-n * kap, -2 * a * r0, 0],
        [-(Fraction(n * (n + 1)) / (2 * a) + Fraction(2 * (n + 1)) / g) * B2, -n * kap - 2 * U1 - 1, -r0 / g],
        [0, -2 * (n + 2) * B2, -n * kap],
    ]


_BUILDERS = {
    "A0": _A0, "A1N": _A1N, "E0_2LE1": _E0_2LE1, "G0": _G0, "G0_sym": _G0_sym, "G1": _G1,
    "U_vort": _U_vort, "trace_mod": _trace_mod, "G1_mod": _G1_mod,
    "H3": _H3, "H_bk": _H_bk, "H2": _H2, "U_scalar": _U_scalar, "H1_1D": _H1_1D,
}


def _structural_zeros(kind: str, c: Coefficients, idx: dict) -> int:
    """Eigenvalues known to vanish identically (resonances and neutral modes)."""
    if kind in ("A1N", "G0", "G1"):
        return 1
    if kind == "E0_2LE1" and idx["L"] == c.N:
        return 1
    if kind == "H3" and idx["k"] == c.N:
        return 1
    if kind == "H_bk" and idx["b"] == 0 and idx["k"] == c.N:
        return 1
    if kind == "H1_1D" and idx["n"] == 2 * c.N:
        return 1
    return 0


def _validate(kind: str, c: Coefficients, idx: dict) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown block kind {kind!r}")
    if kind == "E0_2LE1" and idx.get("L", 0) < 1:
        raise ValueError("E0_2LE1 needs L >= 1")
    if kind == "H3" and idx.get("k", 0) < 1:
        raise ValueError("H3 needs k >= 1")
    if kind == "H_bk":
        b, k = idx.get("b", -1), idx.get("k", -1)
        if b < 0 or k < 0 or b + 2 * k < 1:
            raise ValueError("H_bk needs b, k >= 0 with b + 2k >= 1")
    if kind in ("H2", "U_scalar", "H1_1D") and idx.get("n", 0) < 1:
        raise ValueError(f"{kind} needs n >= 1")
    if kind == "H1_1D" and c.d != 1:
        raise ValueError("H1_1D is the one-dimensional block (d = 1)")


@dataclass
class SpectralBlock:
    kind: str
    params: GasParams
    indices: dict
    exact: list  # rows of Fractions
    structural_zeros: int
    eigenpairs: list | None = None

    @property
    def entries(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.exact])

    @property
    def size(self) -> int:
        return len(self.exact)

    @property
    def damping(self) -> bool:
        return self.kind in DAMPING_KINDS

    def generator_exact(self) -> list:
        if self.damping:
            return [[-x for x in row] for row in self.exact]
        return [list(row) for row in self.exact]

    @property
    def charpoly(self) -> list[Fraction]:
        """Monic characteristic polynomial of the generator, highest degree first."""
        return charpoly_exact(self.generator_exact())

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in the block's own convention."""
        return np.linalg.eigvals(self.entries)

    def generator_eigenvalues(self) -> np.ndarray:
        ev = self.eigenvalues()
        return -ev if self.damping else ev


def assemble_block(kind: str, params: GasParams, **indices) -> SpectralBlock:
    c = coefficients(params)
    _validate(kind, c, indices)
    rows = _BUILDERS[kind](c, **indices)
    rows = [[Fraction(x) for x in row] for row in rows]
    blk = SpectralBlock(kind, params, dict(indices), rows, _structural_zeros(kind, c, indices))
    if kind == "A1N":
        blk.eigenpairs = a1_eigensystem(params)
    return blk


# exact polynomial algebra ---------------------------------------------------

def charpoly_exact(A: Sequence[Sequence[Fraction]]) -> list[Fraction]:
    """Faddeev-LeVerrier in exact rationals.  Returns ``[1, c1, ..., cn]``."""
    n = len(A)
    A = [[Fraction(x) for x in row] for row in A]
    coeffs = [Fraction(1)]
    M = [[Fraction(0)] * n for _ in range(n)]
    c_prev = Fraction(1)
    for k in range(1, n + 1):
        # M_k = A M_{k-1} + c_{k-1} I
        AM = [[sum(A[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        M = [[AM[i][j] + (c_prev if i == j else 0) for j in range(n)] for i in range(n)]
        AM = [[sum(A[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        c_prev = -sum(AM[i][i] for i in range(n)) / k
        coeffs.append(c_prev)
    return coeffs


def routh_hurwitz(charpoly: Sequence) -> tuple[int, bool]:
    """Number of roots with positive real part, and whether a zero pivot occurred.

    Coefficients are highest degree first and are converted to exact rationals.
    With a zero pivot the count is not meaningful (returned as -1).
    """
    p = [Fraction(x) for x in charpoly]
    while len(p) > 1 and p[0] == 0:
        p = p[1:]
    deg = len(p) - 1
    if deg == 0:
        return 0, False
    rows = [p[0::2], p[1::2]]
    width = len(rows[0])
    rows = [r + [Fraction(0)] * (width - len(r)) for r in rows]
    for _ in range(deg - 1):
        prev, cur = rows[-2], rows[-1]
        if cur[0] == 0:
            return -1, True
        nxt = [(cur[0] * prev[j + 1] - prev[0] * cur[j + 1]) / cur[0] for j in range(width - 1)] + [Fraction(0)]
        rows.append(nxt)
    first = [r[0] for r in rows[: deg + 1]]
    if any(x == 0 for x in first):
        return -1, True
    changes = sum(1 for a, b in zip(first, first[1:]) if (a > 0) != (b > 0))
    return changes, False


def _deflate(poly: list[Fraction], zeros: int) -> list[Fraction]:
    """Remove ``zeros`` structural roots at the origin, checking they are there."""
    if zeros == 0:
        return poly
    scale = max(abs(float(x)) for x in poly)
    tail = poly[len(poly) - zeros:]
    if any(abs(float(x)) > 1e-20 * max(scale, 1.0) for x in tail):
        raise InternalInconsistency(f"expected {zeros} zero root(s); trailing coefficients {list(map(float, tail))}")
    return poly[: len(poly) - zeros]


@dataclass(frozen=True)
class Census:
    neg: int
    zero: int
    pos: int
    routh_pos: int | None
    degenerate: bool
    eigenvalues: tuple

    def triple(self) -> tuple[int, int, int]:
        return (self.neg, self.zero, self.pos)

    @property
    def nonneg(self) -> int:
        return self.zero + self.pos


def mode_census(block: SpectralBlock, tol: float = REAL_TOL) -> Census:
    ev = block.generator_eigenvalues()
    z = block.structural_zeros
    order = np.argsort(np.abs(ev))
    is_zero = np.zeros(len(ev), dtype=bool)
    is_zero[order[:z]] = True
    re = ev.real
    free = ~is_zero
    n_zero = z + int(np.sum(free & (np.abs(re) <= tol)))
    n_pos = int(np.sum(free & (re > tol)))
    n_neg = int(np.sum(free & (re < -tol)))
    poly = _deflate(block.charpoly, z)
    rh, degenerate = routh_hurwitz(poly)
    if not degenerate and rh != n_pos:
        raise InternalInconsistency(
            f"{block.kind}{block.indices}: Routh count {rh} vs eigenvalue count {n_pos} ({ev})"
        )
    if not degenerate and n_zero > z:
        raise InternalInconsistency(f"{block.kind}{block.indices}: near-zero eigenvalue with a regular Routh table")
    return Census(n_neg, n_zero, n_pos, None if degenerate else rh, degenerate, tuple(ev.tolist()))


# radial blocks ----------------------------------------------------------------

def a1_eigensystem(params: GasParams) -> list[tuple[float, np.ndarray]]:
    """Closed-form eigenpairs of the order-``N`` radial block (damping convention)."""
    e = compute_exponents(params)
    a, g, d, N, k, v0, q0 = e.alpha, e.gamma, e.d, e.N, e.kappa, e.v0, e.q0
    lam_sharp = 2 * N * k
    lam_flat = 4 * N * k + 1 + 2 * v0
    qN = -q0 * (1 + a * d + 2 * N * a) / (2 * N * k)
    p_sharp = np.array([q0, 0.0, g + 2 * a / N])
    p_flat = np.array([(1 + a * d + 2 * N * a) * q0 / (2 * N * k + 1 + 2 * v0), 1.0, 1 / (2 * N * k + 1 + 2 * v0)])
    p_dag = np.array([qN, 1.0, -1 / (2 * N * k)])
    return [(lam_sharp, p_sharp), (lam_flat, p_flat), (0.0, p_dag)]


def radial_higher_order_spectrum(exp: Exponents, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form and numerically computed eigenvalues of the order-``L`` radial block."""
    if L < 1:
        raise ValueError("L must be >= 1")
    a, g, d, cr = exp.alpha, exp.gamma, exp.d, exp.c_r
    with mpmath.workdps(40):
        crL = float(resonant_speed(d, exp.params.gamma, L))
        E_L = a * g * d * (d + 2) / (4 * L) + a * d * (1 + a * d) / (2 * L * L)
        root = math.sqrt(a * g * d / 2 + E_L + (1 - a * d) ** 2 / (16 * L * L))
    lam1 = 2 * L * exp.kappa
    lam2 = 2 * L * (cr - crL)
    lam3 = lam2 + (4 * L / (1 + a * d)) * root
    closed = np.sort(np.array([lam1, lam2, lam3]))
    numeric = np.sort(assemble_block("E0_2LE1", exp.params, L=L).eigenvalues().real)
    return closed, numeric


def decay_floor(exp: Exponents) -> float:
    """The exponential decay rate ``lambda_`` of the radial stability statement."""
    a, d, N = exp.alpha, exp.d, exp.N
    g = exp.params.gamma
    with mpmath.workdps(40):
        cN = float(resonant_speed(d, g, N))
        cN1 = float(resonant_speed(d, g, N + 1))
    return min(a / (2 * (1 + a * d)), (N + 1) * (cN - 1 / (1 + a * d)), (N + 1) * (cN - cN1))


# Gershgorin -----------------------------------------------------------------

@dataclass(frozen=True)
class GershgorinResult:
    passed: bool
    worst_margin: float
    worst_block: str


def gershgorin_weights(params: GasParams, n: int) -> np.ndarray:
    c = coefficients(params)
    a, C1 = float(c.alpha), c.C1
    return np.array([1.0, n / (2 * a * C1), n * n / (2 * a * C1), n / (a * C1 * C1)])


def gershgorin_certificate(block: SpectralBlock | np.ndarray, theta: float = 1.0,
                           weights: np.ndarray | None = None) -> tuple[bool, float]:
    """Weighted row test ``(|A_ii| - theta) mu_i >= sum_{j != i} |A_ij| mu_j`` on rows with ``A_ii < 0``.

    Passing implies every eigenvalue has real part at most ``-theta``.  Rows
    with a nonnegative diagonal fail outright.
    """
    if isinstance(block, SpectralBlock):
        A = -block.entries if block.damping else block.entries
        if weights is None:
            weights = _default_weights(block)
    else:
        A = np.asarray(block, dtype=float)
        if weights is None:
            weights = np.ones(len(A))
    mu = np.asarray(weights, dtype=float)
    diag = np.diag(A)
    off = np.abs(A) @ mu - np.abs(diag) * mu
    margin = np.where(diag < 0, (np.abs(diag) - theta) * mu - off, -np.inf)
    worst = float(np.min(margin / mu))
    return bool(np.all(margin >= 0)), worst


def _default_weights(block: SpectralBlock) -> np.ndarray:
    idx = block.indices
    if block.kind == "H_bk":
        return gershgorin_weights(block.params, idx["b"] + 2 * idx["k"])
    if block.kind == "H2":
        return gershgorin_weights(block.params, idx["n"])[2:]
    if block.kind == "H3":
        mu = gershgorin_weights(block.params, 2 * idx["k"])
        return np.array([mu[0], mu[2], mu[3]])
    if block.kind == "H1_1D":
        return h1_weights(block.params, idx["n"])
    return np.ones(block.size)


def h1_weights(params: GasParams, n: int) -> np.ndarray:
    """Weights for the one-dimensional block.

    Row 1 needs ``mu_2 < n kappa / (2 a rho0)`` and row 2 needs ``mu_2 > n / (2 a kappa)``;
    ``mu_2 = n / (2 a C1)`` sits between them because ``kappa > C1``.
    """
    c = coefficients(params)
    a, C1 = float(c.alpha), c.C1
    return np.array([1.0, n / (2 * a * C1), (n + 2) / (a * C1 * C1)])


def _hbk_margins(c: Coefficients, n: int, mu: np.ndarray, theta: float):
    """Worst weighted row margin over ``H_{b,k}`` with ``b + 2k = n``.

    Only the first-column entries of rows 2 and 3 depend on ``k``, and with
    ``b = n - 2k`` both are concave quadratics in ``k`` with vertex at
    ``(d + 2n - 2)/4``.  The worst row over integer ``k`` therefore sits at an
    end of ``[0, n//2]`` or next to the vertex, so four candidates suffice.
    """
    a, g, d = float(c.alpha), float(c.gamma), c.d
    r0, U1, kap = float(c.rho0), float(c.U1), float(c.kappa)
    v = (d + 2 * n - 2) / 4
    k = np.unique(np.clip([0, n // 2, math.floor(v), math.ceil(v)], 0, n // 2)).astype(float)
    b = n - 2 * k
    end = -n * kap
    mid = -n * kap - 2 * U1 - 1
    a21 = -(d + 2 * b + 2 * (k - 1)) * k / a - (n / a + 2 * (d + n) / g)
    a31 = -(n / (2 * a) + 2 / g) * (2 * d + 4 * b + 4 * k) * (k + 1)

    def row(diag, value):
        return (abs(diag) - theta) - value if diag < 0 else -np.inf

    m1 = row(end, 2 * a * r0 * mu[1] / mu[0])
    m4 = row(end, 2 * mu[2] / mu[3])
    m2 = row(mid, 0.0) - (np.abs(a21) * mu[0] + r0 / g * mu[3]) / mu[1]
    m3 = row(mid, 0.0) - (np.abs(a31) * mu[0] + (n + 2) * r0 / g * mu[3]) / mu[2]
    per_k = np.minimum(np.minimum(m2, m3), min(m1, m4))
    i = int(np.argmin(per_k))
    return float(per_k[i]), int(b[i]), int(k[i])


def _rows_margin(H: np.ndarray, mu: np.ndarray, theta: float) -> np.ndarray:
    diag = np.einsum("...ii->...i", H)
    off = np.abs(H) @ mu - np.abs(diag) * mu
    m = np.where(diag < 0, (np.abs(diag) - theta) * mu - off, -np.inf)
    return np.min(m / mu, axis=-1)


def gershgorin_order(params: GasParams, n: int, theta: float = 1.0) -> GershgorinResult:
    """Certificate for every block of total order ``n``: the ``H_{b,k}`` family,
    ``H3`` through its embedding into ``H_{0,k}``, ``H2``, the scalar, and for
    ``d = 1`` the one-dimensional block."""
    c = coefficients(params)
    mu = gershgorin_weights(params, n)
    worst, b, k = _hbk_margins(c, n, mu, theta)
    which = f"H_bk(b={b}, k={k})"
    h2 = np.array(_H2(c, n), dtype=float)
    m2 = float(_rows_margin(h2, mu[2:], theta))
    if m2 < worst:
        worst, which = m2, "H2"
    ms = -n * float(c.kappa) - 2 * float(c.U1) - 1
    m_scalar = -ms - theta
    if m_scalar < worst:
        worst, which = m_scalar, "U_scalar"
    if c.d == 1:
        h1 = np.array(_H1_1D(c, n), dtype=float)
        m1 = float(_rows_margin(h1, h1_weights(params, n), theta))
        if m1 < worst:
            worst, which = m1, "H1_1D"
    return GershgorinResult(worst >= 0, worst, which)


def stabilization_order(params: GasParams) -> int:
    return (18 * params.d) ** 2 * params.N


# dimension counts ------------------------------------------------------------

def multiplicity(d: int, k: int) -> int:
    """Number of monomials of degree ``k`` in ``d`` variables."""
    return math.comb(d + k - 1, d - 1)


@dataclass(frozen=True)
class DimensionReport:
    params: GasParams
    m0: int
    m1: int
    m2p: int
    exact: bool
    label: str

    @property
    def total(self) -> int:
        return self.m0 + self.m1 + self.m2p

    def decomposition(self) -> str:
        return f"{self.m0}+{self.m1}+{self.m2p}"


def is_special_case(params: GasParams) -> bool:
    if params.N != 1:
        return False
    if params.d == 1:
        return True
    return (params.gamma, params.d) in SPECIAL_CASES


def zeroth_order_nonneg(params: GasParams) -> int:
    """Growing or neutral modes of the modulated zeroth- and ``N``-th order blocks."""
    d = params.d
    blocks = [assemble_block("trace_mod", params), assemble_block("G1_mod", params)]
    count = sum(mode_census(b).nonneg for b in blocks)
    count += (d * (d + 1) // 2 - 1) * mode_census(assemble_block("G0_sym", params)).nonneg
    count += (d * (d - 1) // 2) * mode_census(assemble_block("U_vort", params)).nonneg
    return count


def unstable_dimension(params: GasParams) -> DimensionReport:
    """Dimension of the growing-plus-neutral Taylor subspace.

    Exact for the ground state at the listed special cases; otherwise an
    upper bound from the lifted diagonal blocks up to the stabilisation order.
    """
    d = params.d
    if is_special_case(params):
        m0 = zeroth_order_nonneg(params) if d > 1 else 0
        if d == 1:
            m1 = mode_census(assemble_block("H1_1D", params, n=1)).pos
        else:
            lift = {2: 2, 3: 7}[d]
            m1 = d * int(mode_census(assemble_block("H_bk", params, b=1, k=0)).pos == 1)
            m1 += lift * int(mode_census(assemble_block("H2", params, n=1)).pos == 1)
        return DimensionReport(params, m0, m1, 0, True, "exact")
    return lifted_block_bound(params)


def lifted_block_bound(params: GasParams, n_max: int | None = None) -> DimensionReport:
    """Sum of nonnegative-real-part multiplicities over lifted blocks of order ``1..n_max``.

    Orders whose Gershgorin certificate passes with a vanishing ``theta`` contribute
    nothing; the rest are censused block by block.
    """
    d = params.d
    c = coefficients(params)
    n_max = stabilization_order(params) if n_max is None else n_max
    m0 = zeroth_order_nonneg(params) if d > 1 else 0
    higher = 0
    for n in range(1, n_max + 1):
        if d > 1 and gershgorin_order(params, n, theta=1e-9).passed:
            continue
        if d == 1:
            if n == 2 * c.N:
                continue  # resonant order, removed by modulation
            higher += mode_census(assemble_block("H1_1D", params, n=n)).nonneg
            continue
        if n % 2 == 0 and n // 2 != c.N:
            higher += mode_census(assemble_block("H3", params, k=n // 2)).nonneg
        for k in range(0, (n - 1) // 2 + 1):
            b = n - 2 * k
            higher += multiplicity(d, b) * mode_census(assemble_block("H_bk", params, b=b, k=k)).nonneg
        higher += multiplicity(d, n + 2) * mode_census(assemble_block("H2", params, n=n)).nonneg
        higher += multiplicity(d, n + 1) * mode_census(assemble_block("U_scalar", params, n=n)).nonneg
    return DimensionReport(params, m0, higher, 0, False, "upper bound via lifted blocks")


# reports ----------------------------------------------------------------------

def census_record(block: SpectralBlock) -> dict:
    cen = mode_census(block)
    return {
        "kind": block.kind,
        "indices": block.indices,
        "eigenvalues": [[float(np.real(z)), float(np.imag(z))] for z in block.eigenvalues()],
        "census": list(cen.triple()),
        "routh_positive": cen.routh_pos,
        "degenerate": cen.degenerate,
    }


def spectral_report(params: GasParams, n_max: int = 4) -> dict:
    blocks = [assemble_block("A0", params), assemble_block("A1N", params), assemble_block("G1", params)]
    if params.d > 1:
        blocks += [assemble_block("G0", params), assemble_block("G0_sym", params)]
        for n in range(1, n_max + 1):
            if n % 2 == 0:
                blocks.append(assemble_block("H3", params, k=n // 2))
            for k in range(0, n // 2 + 1):
                blocks.append(assemble_block("H_bk", params, b=n - 2 * k, k=k))
            blocks.append(assemble_block("H2", params, n=n))
            blocks.append(assemble_block("U_scalar", params, n=n))
    else:
        blocks += [assemble_block("H1_1D", params, n=n) for n in range(1, n_max + 1)]
    dim = unstable_dimension(params) if is_special_case(params) else None
    n_stab = stabilization_order(params)
    gersh = [gershgorin_order(params, n) for n in (n_stab, n_stab + 7)]
    return {
        "params": {"d": params.d, "gamma": str(params.gamma), "N": params.N},
        "blocks": [census_record(b) for b in blocks],
        "dimension": None if dim is None else {
            "total": dim.total, "decomposition": dim.decomposition(), "label": dim.label,
        },
        "gershgorin": [
            {"n": n, "passed": g.passed, "worst_margin": g.worst_margin, "worst_block": g.worst_block}
            for n, g in zip((n_stab, n_stab + 7), gersh)
        ],
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2)
