"""Mean-square truncation errors, bounds, and truncation-level selection.

Error values carry an explicit power of delta. Exact pieces are evaluated
in rational arithmetic and converted to float at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import itertools
import math

import gmpy2
import numpy as np

from .coefficients import (
    CoefficientTensor,
    IntegralSpec,
    build_tensor,
    cbar_block,
    parse_weights,
)
from .kernels import (
    double_diagonal_sum,
    ito_double,
    ito_expansion,
    strat_double,
    strat_single,
    strat_tensor,
)
from .noise import sample_noise_paths

DEFAULT_Q_CAP = 10**6
# exact tensors beyond this many entries are too slow for selection
SELECTION_MAX_ENTRIES = 60_000
MIN_MC_SAMPLES = 1000


class QSelectionError(RuntimeError):
    """No truncation level within the cap meets the error target."""


@dataclass
class ErrorReport:
    spec: IntegralSpec
    q: int
    delta: float
    exact_error: float | None = None
    upper_bound: float | None = None
    mc_estimate: tuple[float, float] | None = None
    method: str = "closed-form"

    def __post_init__(self):
        if self.exact_error is None and self.upper_bound is None and self.mc_estimate is None:
            raise ValueError("error report needs at least one error value")
        if self.exact_error is not None and self.exact_error < -1e-15 * self.delta ** 2:
            raise ValueError("exact error must be nonnegative")

    @property
    def value(self) -> float:
        for v in (self.exact_error, self.upper_bound):
            if v is not None:
                return v
        return self.mc_estimate[0]


def _spec(spec) -> IntegralSpec:
    return spec if isinstance(spec, IntegralSpec) else IntegralSpec(parse_weights(spec))


def _equal_pattern(spec: IntegralSpec) -> tuple[int, ...]:
    """Components relabelled by first appearance; (1, 2, 3) if unknown."""
    if spec.components is None:
        return tuple(range(1, spec.k + 1))
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(c, len(seen) + 1) for c in spec.components)


# -- norms -------------------------------------------------------------------

def exact_Ik(spec) -> tuple[Fraction, int]:
    """Squared L2 norm of the kernel: (coefficient, power of delta)."""
    spec = _spec(spec)
    # integrate s^(2 l) over 0 < s_1 < ... < s_k < 1 one level at a time
    poly = [Fraction(1)]
    for l in spec.weights:
        prod = [Fraction(0)] * (2 * l) + poly
        poly = [Fraction(0)] + [c / (n + 1) for n, c in enumerate(prod)]
    return sum(poly, Fraction(0)), spec.k + 2 * spec.weight_sum


def exact_Ik_value(spec, delta: float) -> float:
    c, p = exact_Ik(spec)
    return float(c) * delta ** p


# -- closed forms for double integrals ----------------------------------------

def _eq1(q: int) -> Fraction:
    return Fraction(1, 2) * (Fraction(1, 2) - sum((Fraction(1, 4 * i * i - 1)
                                                   for i in range(1, q + 1)), Fraction(0)))


def _eq2(q: int) -> Fraction:
    s = Fraction(5, 9)
    s -= 2 * sum((Fraction(1, 4 * i * i - 1) for i in range(2, q + 1)), Fraction(0))
    s -= sum((Fraction(1, (2 * i - 1) ** 2 * (2 * i + 3) ** 2) for i in range(1, q + 1)),
             Fraction(0))
    s -= sum((Fraction((i + 2) ** 2 + (i + 1) ** 2,
                       (2 * i + 1) * (2 * i + 5) * (2 * i + 3) ** 2) for i in range(q + 1)),
             Fraction(0))
    return s / 16


def _eq3(q: int) -> Fraction:
    s = Fraction(1, 9)
    s -= sum((Fraction(1, (2 * i + 1) * (2 * i + 5) * (2 * i + 3) ** 2) for i in range(q + 1)),
             Fraction(0))
    s -= 2 * sum((Fraction(1, (2 * i - 1) ** 2 * (2 * i + 3) ** 2) for i in range(1, q + 1)),
                 Fraction(0))
    return s / 16


def ms_error_double_exact(weights, q: int, equal: bool) -> tuple[Fraction, int]:
    weights = parse_weights(weights)
    if q < 0:
        raise ValueError("q must be nonnegative")
    if weights == (0, 0):
        return (Fraction(0) if equal else _eq1(q)), 2
    if weights in ((1, 0), (0, 1)):
        return (_eq3(q) if equal else _eq2(q)), 4
    raise ValueError(f"no closed-form error for weights {weights}")


def ms_error_double(weights, q: int, delta: float, equal: bool) -> float:
    """Closed-form mean-square errors for the (00), (10) and (01) expansions.

    With equal components the weighted forms give the error of the
    expansion after removing its diagonal mean, i.e. the Ito-type error.
    """
    c, p = ms_error_double_exact(weights, q, equal)
    return float(c) * delta ** p


def double_stratonovich_bias(weights, q: int, delta: float) -> float:
    """Mean of (exact - expansion) for a weighted double integral, i1 == i2."""
    weights = parse_weights(weights)
    if weights == (0, 0):
        return 0.0
    return -(delta ** 2 / 4 + double_diagonal_sum(weights, q, delta))


def ms_error_double_stratonovich(weights, q: int, delta: float, equal: bool) -> float:
    err = ms_error_double(weights, q, delta, equal)
    if equal:
        err += double_stratonovich_bias(weights, q, delta) ** 2
    return err


def _eq1_float(q: int) -> float:
    # the sum telescopes
    return 1 / (4 * (2 * q + 1))


# -- tensor based errors --------------------------------------------------------

def stabilizer(pattern: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Position permutations that preserve the component labels."""
    k = len(pattern)
    return [p for p in itertools.permutations(range(k))
            if all(pattern[p[a]] == pattern[a] for a in range(k))]


def _weight_array(k: int, q: int) -> np.ndarray:
    odd = np.array([gmpy2.mpz(2 * j + 1) for j in range(q + 1)], dtype=object)
    w = np.ones((q + 1,) * k, dtype=object)
    for axis in range(k):
        shape = [1] * k
        shape[axis] = q + 1
        w = w * odd.reshape(shape)
    return w


def permutation_error_exact(spec, q: int) -> tuple[Fraction, int]:
    """I_k - sum_j C_j sum_sigma C_{sigma j}, dimensionless and exact."""
    spec = _spec(spec)
    k, L = spec.k, spec.weight_sum
    cb = cbar_block(spec.weights, q)
    w = _weight_array(k, q)
    sym = sum((np.transpose(cb, p) for p in stabilizer(_equal_pattern(spec))),
              np.zeros(cb.shape, dtype=object) + gmpy2.mpq(0))
    total = (w * cb * sym).sum()
    ik, power = exact_Ik(spec)
    val = ik - Fraction(int(total.numerator), int(total.denominator)) / 4 ** (k + L)
    return val, power


def parseval_sum_exact(spec, q: int) -> Fraction:
    """sum over j <= q of C_j^2 in units of delta**(k + 2L)."""
    spec = _spec(spec)
    cb = cbar_block(spec.weights, q)
    total = (_weight_array(spec.k, q) * cb * cb).sum()
    return Fraction(int(total.numerator), int(total.denominator)) / 4 ** (spec.k + spec.weight_sum)


def _check_tensor(spec: IntegralSpec, tensor: CoefficientTensor):
    if tensor.spec.weights != spec.weights:
        raise ValueError(f"tensor is for {tensor.spec}, not {spec}")


def ms_error_permutation(spec, tensor: CoefficientTensor) -> float:
    spec = _spec(spec)
    _check_tensor(spec, tensor)
    c, p = permutation_error_exact(spec, tensor.q)
    return float(c) * tensor.delta ** p


def upper_bound_factorial(spec, tensor: CoefficientTensor) -> float:
    spec = _spec(spec)
    _check_tensor(spec, tensor)
    ik, p = exact_Ik(spec)
    return math.factorial(spec.k) * float(ik - parseval_sum_exact(spec, tensor.q)) * tensor.delta ** p


def tail_bound_log(q: int, delta: float) -> float:
    """Logarithmic bound on the (00) error with distinct components."""
    if q < 1:
        raise ValueError("the logarithmic tail bound needs q >= 1")
    return -(delta ** 2 / 8) * math.log(1 - 2 / (2 * q + 1))


# -- Monte Carlo ---------------------------------------------------------------

def noise_extent(spec, q: int) -> int:
    spec = _spec(spec)
    if spec.k == 1:
        return spec.weights[0]
    if spec.k == 2 and spec.weights != (0, 0):
        return q + 2
    return max(q, 1) if spec.k == 2 else q


def realize(spec, z, q: int, delta: float, form: str = "stratonovich"):
    """Expansion of one integral at truncation q from noise array z."""
    spec = _spec(spec)
    if spec.components is None:
        raise ValueError("spec needs components")
    if form not in ("stratonovich", "ito"):
        raise ValueError(f"unknown form {form!r}")
    c = spec.components
    if spec.k == 1:
        return strat_single(spec.weights[0], z, c[0], delta)
    if spec.k == 2:
        if form == "ito":
            return ito_double(spec.weights, z, c[0], c[1], q, delta)
        return strat_double(spec.weights, z, c[0], c[1], q, delta)
    tensor = build_tensor(spec, q, delta)
    if form == "ito":
        return ito_expansion(spec, z, tensor)
    return strat_tensor(spec, z, tensor)


def mc_error_estimate(spec, q: int, q_ref: int, n: int, delta: float, seed: int,
                      form: str = "stratonovich", z: np.ndarray | None = None):
    """Mean and standard error of (I^{q_ref} - I^q)^2 on shared noise."""
    spec = _spec(spec)
    if q_ref < q:
        raise ValueError("q_ref must be at least q")
    if n < MIN_MC_SAMPLES:
        raise ValueError(f"need at least {MIN_MC_SAMPLES} samples")
    if q_ref == q:
        return 0.0, 0.0
    m = max(spec.components)
    if z is None:
        z = sample_noise_paths(seed, range(n), 0, m, noise_extent(spec, q_ref))
    diff = realize(spec, z, q_ref, delta, form) - realize(spec, z, q, delta, form)
    sq = np.asarray(diff) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))


# -- selection --------------------------------------------------------------

def threshold(delta: float, c_target: float = 1.0) -> float:
    return c_target * delta ** 6


def _search(err, thr: float, q_cap: int, what: str) -> int:
    for q in range(q_cap + 1):
        if err(q) <= thr:
            return q
    raise QSelectionError(
        f"{what}: no q <= {q_cap} reaches {thr:.3e}; use a larger C_target or step")


def _curve_eq2(thr_dimless: float, q_cap: int) -> int:
    # incremental float evaluation of the (i1 != i2) weighted closed form
    s = 5 / 9 - 5 / 45
    if s / 16 <= thr_dimless:
        return 0
    for q in range(1, q_cap + 1):
        if q >= 2:
            s -= 2 / (4 * q * q - 1)
        s -= 1 / ((2 * q - 1) ** 2 * (2 * q + 3) ** 2)
        s -= ((q + 2) ** 2 + (q + 1) ** 2) / ((2 * q + 1) * (2 * q + 5) * (2 * q + 3) ** 2)
        if s / 16 <= thr_dimless:
            return q
    raise QSelectionError(f"no q <= {q_cap} reaches the target; use a larger C_target or step")


def _tensor_q_limit(k: int) -> int:
    return int(round(SELECTION_MAX_ENTRIES ** (1 / k))) - 1


def _select(spec: IntegralSpec, delta: float, c_target: float, q_cap: int) -> tuple[int, str]:
    thr = threshold(delta, c_target)
    pattern = _equal_pattern(spec)
    distinct = len(set(pattern)) == spec.k
    k = spec.k
    if k == 1:
        return 0, "closed-form"
    if spec.weights == (0, 0):
        if not distinct:
            return 0, "closed-form"
        dimless = thr / delta ** 2
        q = max(0, math.ceil((1 / (4 * dimless) - 1) / 2)) if dimless > 0 else q_cap + 1
        while q > 0 and _eq1_float(q - 1) <= dimless:
            q -= 1
        while _eq1_float(q) > dimless:
            q += 1
        if q > q_cap:
            raise QSelectionError(
                f"{spec}: q={q} exceeds cap {q_cap}; use a larger C_target or step")
        return q, "closed-form"
    if k == 2:
        if distinct:
            return _curve_eq2(thr / delta ** 4, q_cap), "closed-form"
        q = _search(lambda q: ms_error_double_stratonovich(spec.weights, q, delta, True),
                    thr, q_cap, str(spec))
        return q, "closed-form"
    if len(set(pattern)) == 1 and spec.weight_sum == 0:
        return 0, "closed-form"
    limit = min(q_cap, _tensor_q_limit(k))
    ik, power = exact_Ik(spec)
    dimless = thr / delta ** power
    method = "closed-form" if distinct else "permutation-form"
    perms = stabilizer(pattern)
    fetched, cbf = -1, None
    for q in range(limit + 1):
        if q > fetched:
            # grow the exact block geometrically, then work in floats
            fetched = min(limit, max(4, 2 * q))
            cbf = np.vectorize(float, otypes=[float])(cbar_block(spec.weights, fetched))
        cb = cbf[(slice(0, q + 1),) * k]
        w = np.ones(cb.shape)
        for axis in range(k):
            shape = [1] * k
            shape[axis] = q + 1
            w = w * (2 * np.arange(q + 1) + 1.0).reshape(shape)
        sym = sum(np.transpose(cb, p) for p in perms)
        val = float(ik) - float(np.sum(w * cb * sym)) / 4 ** (k + spec.weight_sum)
        if val <= dimless:
            return q, method
    raise QSelectionError(
        f"{spec}: no q <= {limit} reaches {thr:.3e} (coefficient tensors are capped at "
        f"{SELECTION_MAX_ENTRIES} entries); use a larger C_target or step")


def select_q(spec, delta: float, c_target: float = 1.0, q_cap: int = DEFAULT_Q_CAP) -> int:
    """Minimal q whose error measure is at most c_target * delta**6."""
    if c_target <= 0:
        raise ValueError("C_target must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    spec = _spec(spec)
    return _select(spec, delta, c_target, q_cap)[0]


def error_report(spec, q: int, delta: float) -> ErrorReport:
    """Best available error figures for one spec at truncation q."""
    spec = _spec(spec)
    pattern = _equal_pattern(spec)
    distinct = len(set(pattern)) == spec.k
    if spec.k == 1:
        return ErrorReport(spec, q, delta, exact_error=0.0)
    if spec.k == 2:
        err = ms_error_double_stratonovich(spec.weights, q, delta, not distinct)
        bound = tail_bound_log(q, delta) if spec.weights == (0, 0) and distinct and q >= 1 else None
        return ErrorReport(spec, q, delta, exact_error=err, upper_bound=bound)
    tensor = build_tensor(spec, q, delta)
    bound = upper_bound_factorial(spec, tensor)
    if len(set(pattern)) == 1 and spec.weight_sum == 0:
        return ErrorReport(spec, q, delta, exact_error=0.0, upper_bound=bound)
    err = ms_error_permutation(spec, tensor)
    return ErrorReport(spec, q, delta, exact_error=err, upper_bound=bound,
                       method="closed-form" if distinct else "permutation-form")


def select_q_report(spec, delta: float, c_target: float = 1.0,
                    q_cap: int = DEFAULT_Q_CAP) -> ErrorReport:
    spec = _spec(spec)
    q, method = _select(spec, delta, c_target, q_cap)
    rep = error_report(spec, q, delta)
    rep.method = method
    return rep
