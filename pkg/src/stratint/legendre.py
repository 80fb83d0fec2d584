"""Legendre polynomials, the shifted orthonormal system on [t, T] and a small
exact polynomial algebra.

Polynomials are coefficient lists in ascending degree. The list helpers are
generic over the number type, so the same code serves ``fractions.Fraction``
(public API) and ``gmpy2.mpq`` (bulk coefficient tables).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math
from typing import Sequence

import numpy as np

MAX_DEGREE = 64


class DegreeOverflowError(ValueError):
    """Requested polynomial degree exceeds the configured maximum."""


class DomainError(ValueError):
    """Evaluation point lies outside the integration interval."""


# -- list-level helpers -----------------------------------------------------

def _trim(c: list) -> list:
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return c


def poly_mul(a: Sequence, b: Sequence) -> list:
    zero = a[0] * 0
    out = [zero] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def poly_add(a: Sequence, b: Sequence) -> list:
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for i, y in enumerate(b):
        out[i] += y
    return out


def poly_integrate(c: Sequence) -> list:
    """Antiderivative with zero constant term."""
    return [c[0] * 0] + [x / (i + 1) for i, x in enumerate(c)]


def poly_eval(c: Sequence, x):
    acc = c[-1] * 0
    for coef in reversed(c):
        acc = acc * x + coef
    return acc


def poly_integral_from(c: Sequence, lower) -> list:
    """Coefficients of x -> int_lower^x c(y) dy."""
    out = poly_integrate(c)
    out[0] -= poly_eval(out, lower)
    return out


# -- public types -------------------------------------------------------------

@dataclass(frozen=True)
class RationalPoly:
    """Polynomial with exact rational coefficients, ascending degree."""

    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        c = _trim([Fraction(x) for x in self.coeffs] or [Fraction(0)])
        if len(c) - 1 > MAX_DEGREE:
            raise DegreeOverflowError(f"degree {len(c) - 1} exceeds {MAX_DEGREE}")
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return poly_eval(self.coeffs, x)

    def __mul__(self, other: RationalPoly) -> RationalPoly:
        return RationalPoly(tuple(poly_mul(self.coeffs, other.coeffs)))

    def __add__(self, other: RationalPoly) -> RationalPoly:
        return RationalPoly(tuple(poly_add(self.coeffs, other.coeffs)))

    def __neg__(self) -> RationalPoly:
        return RationalPoly(tuple(-c for c in self.coeffs))

    def __sub__(self, other: RationalPoly) -> RationalPoly:
        return self + (-other)

    def integral(self, lower, upper) -> Fraction:
        anti = poly_integrate(self.coeffs)
        return poly_eval(anti, Fraction(upper)) - poly_eval(anti, Fraction(lower))


@dataclass(frozen=True)
class Interval:
    t: float
    T: float

    def __post_init__(self):
        if not self.T > self.t:
            raise ValueError(f"interval requires T > t, got [{self.t}, {self.T}]")

    @property
    def delta(self) -> float:
        return self.T - self.t


def poly_antiderivative(p: RationalPoly) -> RationalPoly:
    return RationalPoly(tuple(poly_integrate(p.coeffs)))


@lru_cache(maxsize=None)
def _legendre_coeffs(n: int) -> tuple[Fraction, ...]:
    if n == 0:
        return (Fraction(1),)
    if n == 1:
        return (Fraction(0), Fraction(1))
    # (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
    m = n - 1
    pm = _legendre_coeffs(m)
    pm1 = _legendre_coeffs(m - 1)
    xp = [Fraction(0)] + list(pm)
    out = [Fraction(2 * m + 1, m + 1) * c for c in xp]
    for i, c in enumerate(pm1):
        out[i] -= Fraction(m, m + 1) * c
    return tuple(out)


def legendre_poly(n: int, max_degree: int = MAX_DEGREE) -> RationalPoly:
    """Exact Legendre polynomial P_n via Bonnet's recurrence."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    if n > max_degree:
        raise DegreeOverflowError(f"degree {n} exceeds maximum {max_degree}")
    return RationalPoly(_legendre_coeffs(n))


def legendre_values(nmax: int, x) -> np.ndarray:
    """P_0..P_nmax at x (array-like), by the three-term recurrence.

    Returns an array of shape (nmax + 1, *x.shape).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def phi_eval(j: int, s, iv: Interval, tol: float = 1e-12):
    """Orthonormal shifted Legendre function phi_j on [iv.t, iv.T]."""
    s_arr = np.asarray(s, dtype=float)
    slack = tol * max(1.0, abs(iv.t), abs(iv.T))
    if np.any(s_arr < iv.t - slack) or np.any(s_arr > iv.T + slack):
        raise DomainError(f"s outside [{iv.t}, {iv.T}]")
    d = iv.delta
    arg = (s_arr - iv.t - d / 2) * 2 / d
    val = math.sqrt((2 * j + 1) / d) * legendre_values(j, arg)[j]
    return float(val) if np.ndim(s) == 0 else val


def gauss_nodes(n: int, iv: Interval) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped to the interval."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = iv.delta / 2
    return iv.t + half * (x + 1), half * w
