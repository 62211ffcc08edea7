"""Similarity exponents and leading Taylor values of the implosion profiles.

A parameter point is ``(d, gamma, N)``: spatial dimension, adiabatic exponent
and profile index.  Everything else in the package is derived from the
:class:`Exponents` record returned by :func:`compute_exponents`.

The exponents are evaluated with mpmath at 40 significant digits and rounded
to double precision at the end.  The resonance condition that selects ``c_r``
is an exact algebraic identity, and downstream determinant checks amplify any
rounding in it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

_DPS = 40


def parse_gamma(value) -> Fraction:
    """Parse an adiabatic exponent given as ``"5/3"``, ``1.4``, or a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    text = str(value).strip()
    try:
        return Fraction(text)
    except ValueError as exc:
        raise ValueError(f"cannot parse gamma from {value!r}") from exc


@dataclass(frozen=True)
class GasParams:
    """Problem point.  ``gamma`` is kept exact; ``alpha = (gamma - 1)/2``."""

    d: int
    gamma: Fraction
    N: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gamma", parse_gamma(self.gamma))
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension d must be 1, 2 or 3, got {self.d}")
        if not (1 < self.gamma <= 2 * self.d + 1):
            raise ValueError(
                f"gamma must lie in (1, {2 * self.d + 1}] for d={self.d}, got {self.gamma}"
            )
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"profile index N must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def alpha(self) -> Fraction:
        return (self.gamma - 1) / 2

    def with_N(self, N: int) -> "GasParams":
        return GasParams(self.d, self.gamma, N)


@dataclass(frozen=True)
class Exponents:
    params: GasParams
    c_r: float
    c_u: float
    c_b: float
    kappa: float
    v0: float
    q0: float
    h0: float
    E_N: float

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def gamma(self) -> float:
        return float(self.params.gamma)

    @property
    def alpha(self) -> float:
        return float(self.params.alpha)

    @property
    def N(self) -> int:
        return self.params.N

    def outgoing_bound(self) -> float:
        """Uniform lower bound on the slowest self-similar wave speed."""
        a, d = self.alpha, self.d
        return (1 + 2 * a * d / 3) / (4 * self.N * (1 + a * d))

    def as_record(self) -> dict:
        rec = {k: v for k, v in asdict(self).items() if k != "params"}
        rec.update(d=self.d, gamma=str(self.params.gamma), N=self.N, alpha=self.alpha)
        return rec


def _mp(x: Fraction):
    return mpmath.mpf(x.numerator) / x.denominator


def correction_term(d: int, gamma: Fraction, n) -> mpmath.mpf:
    """``E_n = a g d (d+2)/(4n) + a d (1 + a d)/(2 n^2)`` with ``a = (g-1)/2``."""
    with mpmath.workdps(_DPS):
        g = _mp(Fraction(gamma))
        a = (g - 1) / 2
        n = mpmath.mpf(n)
        return a * g * d * (d + 2) / (4 * n) + a * d * (1 + a * d) / (2 * n * n)


def resonant_speed(d: int, gamma: Fraction, L) -> mpmath.mpf:
    """Space exponent at which the order-``L`` recursion matrix becomes singular."""
    with mpmath.workdps(_DPS):
        g = _mp(Fraction(gamma))
        a = (g - 1) / 2
        L = mpmath.mpf(L)
        ad = a * d
        root = mpmath.sqrt(a * g * d / 2 + correction_term(d, gamma, L) + (1 - ad) ** 2 / (16 * L * L))
        return (1 + root + (1 - ad) / (4 * L)) / (1 + ad)


def limit_speed(d: int, gamma: Fraction) -> mpmath.mpf:
    with mpmath.workdps(_DPS):
        g = _mp(Fraction(gamma))
        a = (g - 1) / 2
        return (1 + mpmath.sqrt(a * g * d / 2)) / (1 + a * d)


def _assemble(params: GasParams, c_r, E_N) -> Exponents:
    with mpmath.workdps(_DPS):
        d = params.d
        g = _mp(params.gamma)
        a = (g - 1) / 2
        v0 = -1 / (1 + a * d)
        q0 = mpmath.sqrt(d * g / (2 * a)) / (1 + a * d)
        c_b = c_r + v0
        return Exponents(
            params=params,
            c_r=float(c_r),
            c_u=float(c_r - 1),
            c_b=float(c_b),
            kappa=float(c_b),
            v0=float(v0),
            q0=float(q0),
            h0=1.0,
            E_N=float(E_N),
        )


def compute_exponents(params: GasParams) -> Exponents:
    c_r = resonant_speed(params.d, params.gamma, params.N)
    return _assemble(params, c_r, correction_term(params.d, params.gamma, params.N))


def limit_exponents(d: int, gamma) -> Exponents:
    """The ``N -> infinity`` limit.  ``params.N`` is a placeholder (1) and ``E_N = 0``."""
    gamma = parse_gamma(gamma)
    params = GasParams(d, gamma, 1)
    return _assemble(params, limit_speed(d, gamma), mpmath.mpf(0))


def kinetic_admissible(params: GasParams, gamma_kin: float) -> tuple[bool, float]:
    """Scalar hydrodynamic-limit test for a collision kernel exponent.

    Returns ``(ok, margin)`` with ``margin = -(-3 c_b + (gamma_kin + 3) c_u + 1)``;
    ``ok`` iff the margin is positive.
    """
    if not (-3 <= gamma_kin <= 2):
        raise ValueError(f"gamma_kin must lie in [-3, 2], got {gamma_kin}")
    e = compute_exponents(params)
    margin = -(-3 * e.c_b + (gamma_kin + 3) * e.c_u + 1)
    return margin > 0, margin


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[Exponents, ...]
    limit: Exponents

    def c_r(self) -> list[float]:
        return [r.c_r for r in self.rows]

    def to_csv(self) -> str:
        cols = ["d", "gamma", "N", "c_r", "c_u", "c_b", "kappa", "v0", "q0"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for e in self.rows:
            w.writerow([e.d, str(e.params.gamma), e.N] + [repr(getattr(e, c)) for c in cols[3:]])
        e = self.limit
        w.writerow([e.d, str(e.params.gamma), "inf"] + [repr(getattr(e, c)) for c in cols[3:]])
        return buf.getvalue()


def exponent_sweep(d: int, gamma, N_range: Iterable[int]) -> SweepTable:
    Ns = list(N_range)
    if not Ns:
        raise ValueError("N_range must be nonempty")
    gamma = parse_gamma(gamma)
    rows = tuple(compute_exponents(GasParams(d, gamma, n)) for n in sorted(Ns))
    return SweepTable(rows=rows, limit=limit_exponents(d, gamma))


def to_json(e: Exponents) -> str:
    return json.dumps(e.as_record(), indent=2)


def gamma_grid(d: int, count: int = 20) -> list[Fraction]:
    """Evenly spaced adiabatic exponents in ``(1, 2d+1]``, endpoint included."""
    return [1 + Fraction(2 * d * i, count) for i in range(1, count + 1)]


def parameter_grid(Ns: Sequence[int] = tuple(range(1, 21)), count: int = 20) -> list[GasParams]:
    return [GasParams(d, g, n) for d in (1, 2, 3) for g in gamma_grid(d, count) for n in Ns]
