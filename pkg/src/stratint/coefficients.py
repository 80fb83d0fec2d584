"""Exact Fourier-Legendre coefficients of iterated integrals.

For weight exponents (l_1, ..., l_k) the dimensionless coefficient is the
nested integral over -1 < x_1 < ... < x_k < 1 of

    prod_l P_{j_l}(x_l) * (-(x_l + 1))**l_l

computed exactly by repeated multiplication and integration of rational
polynomials. On a step of length delta the coefficient of the orthonormal
expansion is

    C = sqrt(prod(2 j_l + 1)) / 2**(k + L) * delta**((k + 2 L) / 2) * Cbar,

with L = sum(l_l). Tables are delta-independent; scaling is applied on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import itertools
import json
import math
import threading
from pathlib import Path
from typing import Iterable, Sequence

import gmpy2
import numpy as np

from .legendre import (
    MAX_DEGREE,
    DegreeOverflowError,
    legendre_poly,
    poly_eval,
    poly_integral_from,
    poly_integrate,
    poly_mul,
)

# The twelve integral families of the order-2.5 scheme.
SCHEME_FAMILIES: tuple[tuple[int, ...], ...] = (
    (0,), (1,), (2,),
    (0, 0), (1, 0), (0, 1),
    (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (0, 0, 0, 0),
    (0, 0, 0, 0, 0),
)

TABLE_FORMAT = "stratint-coefficient-table"
TABLE_VERSION = 1
DEFAULT_MAX_ENTRIES = 2_000_000


class CoefficientTableError(ValueError):
    """Malformed or inconsistent coefficient table file."""


def parse_weights(label) -> tuple[int, ...]:
    """'010' or (0, 1, 0) -> (0, 1, 0)."""
    if isinstance(label, str):
        label = label.strip().strip("()")
        if not label or not label.isdigit():
            raise ValueError(f"bad weight label {label!r}")
        return tuple(int(c) for c in label)
    return tuple(int(x) for x in label)


def weights_label(weights: Sequence[int]) -> str:
    return "".join(str(w) for w in weights)


@dataclass(frozen=True)
class IntegralSpec:
    """One iterated integral: weight exponents and Wiener components.

    Positions are in integration order, position 1 innermost. Components
    may be left as None when only coefficients are needed.
    """

    weights: tuple[int, ...]
    components: tuple[int, ...] | None = None

    def __post_init__(self):
        w = parse_weights(self.weights)
        object.__setattr__(self, "weights", w)
        if not 1 <= len(w) <= 5:
            raise ValueError(f"multiplicity must be 1..5, got {len(w)}")
        if any(x not in (0, 1, 2) for x in w):
            raise ValueError(f"weight exponents must be 0, 1 or 2, got {w}")
        if self.components is not None:
            c = tuple(int(x) for x in self.components)
            if len(c) != len(w):
                raise ValueError("components and weights differ in length")
            if any(x < 1 for x in c):
                raise ValueError("components are 1-based Wiener indices")
            object.__setattr__(self, "components", c)

    @classmethod
    def parse(cls, label: str, components: Iterable[int] | None = None) -> IntegralSpec:
        return cls(parse_weights(label), None if components is None else tuple(components))

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def weight_sum(self) -> int:
        return sum(self.weights)

    @property
    def extended(self) -> bool:
        return self.weights not in SCHEME_FAMILIES

    @property
    def label(self) -> str:
        return weights_label(self.weights)

    @property
    def delta_exponent(self) -> Fraction:
        """Power of delta carried by every scaled coefficient."""
        return Fraction(self.k + 2 * self.weight_sum, 2)

    def with_components(self, components: Sequence[int]) -> IntegralSpec:
        return IntegralSpec(self.weights, tuple(components))

    def __str__(self):
        if self.components is None:
            return f"({self.label})"
        return f"({self.label})[{','.join(map(str, self.components))}]"


def _as_spec(spec) -> IntegralSpec:
    if isinstance(spec, IntegralSpec):
        return spec
    return IntegralSpec(parse_weights(spec))


# -- exact nested integrals ---------------------------------------------------

_MPQ_ZERO = gmpy2.mpq(0)


def _mpq_poly(coeffs) -> list:
    return [gmpy2.mpq(c.numerator, c.denominator) for c in coeffs]


def _weighted_legendre(j: int, l: int) -> list:
    """P_j(x) * (-(x + 1))**l as mpq coefficients."""
    p = _mpq_poly(legendre_poly(j).coeffs)
    for _ in range(l):
        p = poly_mul(p, [gmpy2.mpq(-1), gmpy2.mpq(-1)])
    return p


def _nested_block(weights: tuple[int, ...], q: int) -> np.ndarray:
    """All Cbar for max(j) <= q as an object array of mpq, axes j_1..j_k."""
    k = len(weights)
    if q + 2 > MAX_DEGREE:
        raise DegreeOverflowError(f"truncation {q} exceeds polynomial headroom")
    pw = [[_weighted_legendre(j, l) for j in range(q + 1)] for l in weights]
    minus_one = gmpy2.mpq(-1)
    # prefix polynomials g(x) = inner nested integral up to x
    prefixes = {(): [gmpy2.mpq(1)]}
    for level in range(k - 1):
        nxt = {}
        for key, g in prefixes.items():
            for j in range(q + 1):
                nxt[key + (j,)] = poly_integral_from(poly_mul(pw[level][j], g), minus_one)
        prefixes = nxt
    # outermost level: int_{-1}^{1} P_j w g dx = sum_n g_n * moment[j][n]
    last = pw[k - 1]
    max_deg = max(len(g) for g in prefixes.values())
    moments = []
    for j in range(q + 1):
        row = []
        for n in range(max_deg):
            anti = poly_integrate(poly_mul(last[j], [_MPQ_ZERO] * n + [gmpy2.mpq(1)]))
            row.append(poly_eval(anti, gmpy2.mpq(1)) - poly_eval(anti, minus_one))
        moments.append(row)
    out = np.empty((q + 1,) * k, dtype=object)
    for key, g in prefixes.items():
        for j in range(q + 1):
            row = moments[j]
            out[key + (j,)] = sum((c * row[n] for n, c in enumerate(g)), _MPQ_ZERO)
    return out


class _CbarCache:
    """Per-weights cache of the largest computed block; reads are lock-free."""

    def __init__(self):
        self._blocks: dict[tuple[int, ...], np.ndarray] = {}
        self._lock = threading.Lock()

    def block(self, weights: tuple[int, ...], q: int) -> np.ndarray:
        blk = self._blocks.get(weights)
        if blk is None or blk.shape[0] <= q:
            with self._lock:
                blk = self._blocks.get(weights)
                if blk is None or blk.shape[0] <= q:
                    blk = _nested_block(weights, q)
                    self._blocks[weights] = blk
        return blk[(slice(0, q + 1),) * len(weights)]

    def clear(self):
        with self._lock:
            self._blocks.clear()


_CACHE = _CbarCache()


def cbar_block(weights, q: int) -> np.ndarray:
    """Object array (mpq) of all Cbar with max index <= q."""
    return _CACHE.block(parse_weights(weights), q)


def cbar(spec, j: Sequence[int]) -> Fraction:
    """Exact dimensionless coefficient Cbar_{j_k ... j_1}.

    ``j`` is given in integration order (j_1 innermost).
    """
    spec = _as_spec(spec)
    j = tuple(int(x) for x in j)
    if len(j) != spec.k:
        raise ValueError(f"index tuple {j} does not match multiplicity {spec.k}")
    if min(j) < 0:
        raise ValueError("indices must be nonnegative")
    if max(j) + 2 > MAX_DEGREE:
        raise DegreeOverflowError(f"index {max(j)} exceeds polynomial headroom")
    v = cbar_block(spec.weights, max(j))[j]
    return Fraction(int(v.numerator), int(v.denominator))


def scale_factor(spec, j: Sequence[int], delta: float) -> float:
    spec = _as_spec(spec)
    k, L = spec.k, spec.weight_sum
    norm = math.sqrt(math.prod(2 * x + 1 for x in j))
    return norm / 2 ** (k + L) * delta ** ((k + 2 * L) / 2)


def scaled_coefficient(spec, j: Sequence[int], delta: float) -> float:
    """Coefficient C of the orthonormal expansion on a step of length delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return scale_factor(spec, j, delta) * float(cbar(spec, j))


def _scale_array(weights: tuple[int, ...], q: int, delta: float) -> np.ndarray:
    k, L = len(weights), sum(weights)
    root = np.sqrt(2 * np.arange(q + 1) + 1.0)
    norm = np.ones((q + 1,) * k)
    for axis in range(k):
        shape = [1] * k
        shape[axis] = q + 1
        norm = norm * root.reshape(shape)
    return norm / 2 ** (k + L) * delta ** ((k + 2 * L) / 2)


def _to_float(arr: np.ndarray) -> np.ndarray:
    return np.vectorize(float, otypes=[float])(arr) if arr.size else np.zeros(arr.shape)


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Dense table of coefficients up to truncation q for one spec.

    ``exact`` holds Cbar as gmpy2.mpq, axes (j_1, ..., j_k); ``values`` holds
    the delta-scaled floats in the same layout.
    """

    spec: IntegralSpec
    q: int
    delta: float
    exact: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def extent(self) -> int:
        return (self.q + 1) ** self.k

    def rescaled(self, delta: float) -> CoefficientTensor:
        if delta <= 0:
            raise ValueError("delta must be positive")
        vals = _scale_array(self.spec.weights, self.q, delta) * _to_float(self.exact)
        return CoefficientTensor(self.spec, self.q, delta, self.exact, vals)

    def truncated(self, q: int) -> CoefficientTensor:
        if q > self.q:
            raise ValueError("cannot extend a tensor by truncation")
        sl = (slice(0, q + 1),) * self.k
        return CoefficientTensor(self.spec, q, self.delta, self.exact[sl], self.values[sl])


def build_tensor(spec, q: int, delta: float = 1.0,
                 max_entries: int = DEFAULT_MAX_ENTRIES) -> CoefficientTensor:
    spec = _as_spec(spec)
    if q < 0:
        raise ValueError("q must be nonnegative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if (q + 1) ** spec.k > max_entries:
        raise ValueError(
            f"tensor for {spec} at q={q} has {(q + 1) ** spec.k} entries, "
            f"above the limit of {max_entries}")
    exact = cbar_block(spec.weights, q)
    vals = _scale_array(spec.weights, q, delta) * _to_float(exact)
    return CoefficientTensor(spec, q, delta, exact, vals)


# -- table files --------------------------------------------------------------

def _rational_str(v) -> str:
    return f"{int(v.numerator)}/{int(v.denominator)}"


def export_table(t: CoefficientTensor, destination) -> None:
    """Write the delta-independent Cbar table as a JSON document."""
    header = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "k": t.k,
        "weights": list(t.spec.weights),
        "q": t.q,
        "count": t.extent,
    }
    lines = ["{"]
    for key, val in header.items():
        lines.append(f"  {json.dumps(key)}: {json.dumps(val)},")
    lines.append('  "entries": [')
    idx = list(np.ndindex(*t.exact.shape))
    for n, j in enumerate(idx):
        entry = json.dumps({"j": list(j), "cbar": _rational_str(t.exact[j])})
        lines.append("    " + entry + ("," if n + 1 < len(idx) else ""))
    lines.append("  ]")
    lines.append("}")
    Path(destination).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_rational(text: str, j) -> gmpy2.mpq:
    try:
        num, den = text.split("/")
        val = gmpy2.mpq(int(num), int(den))
    except (ValueError, ZeroDivisionError, AttributeError) as exc:
        raise CoefficientTableError(f"bad rational {text!r} at index {tuple(j)}") from exc
    return val


def import_table(source, delta: float = 1.0) -> CoefficientTensor:
    try:
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CoefficientTableError(f"not a coefficient table: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != TABLE_FORMAT:
        raise CoefficientTableError("missing or unknown format tag")
    if doc.get("version") != TABLE_VERSION:
        raise CoefficientTableError(f"unsupported table version {doc.get('version')!r}")
    try:
        spec = IntegralSpec(tuple(doc["weights"]))
        q = int(doc["q"])
        entries = doc["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CoefficientTableError(f"bad header: {exc}") from exc
    if int(doc.get("k", spec.k)) != spec.k:
        raise CoefficientTableError("header k disagrees with weights")
    exact = np.empty((q + 1,) * spec.k, dtype=object)
    seen = np.zeros(exact.shape, dtype=bool)
    for pos, entry in enumerate(entries):
        try:
            j = tuple(int(x) for x in entry["j"])
            text = entry["cbar"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CoefficientTableError(f"bad entry at position {pos}") from exc
        if len(j) != spec.k or min(j) < 0 or max(j) > q:
            raise CoefficientTableError(f"index {j} out of range at position {pos}")
        exact[j] = _parse_rational(text, j)
        seen[j] = True
    if not seen.all():
        missing = tuple(int(x) for x in np.argwhere(~seen)[0])
        raise CoefficientTableError(f"missing entry for index {missing}")
    vals = _scale_array(spec.weights, q, delta) * _to_float(exact)
    return CoefficientTensor(spec, q, delta, exact, vals)


def index_tuples(k: int, q: int):
    return itertools.product(range(q + 1), repeat=k)
