"""Realizations of iterated Stratonovich integrals from Gaussian projections.

All kernels accept either a ``NoiseMatrix`` or a raw array whose last two
axes are (component, basis index); leading axes are treated as independent
samples. Component arguments are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Mapping

import numpy as np

from .coefficients import (
    CoefficientTensor,
    IntegralSpec,
    build_tensor,
    parse_weights,
)
from .noise import NoiseMatrix

ORDERS = (1.0, 1.5, 2.0, 2.5)

_ORDER_FAMILIES = {
    1.0: ((0,), (0, 0)),
    1.5: ((0,), (1,), (0, 0), (0, 0, 0)),
    2.0: ((0,), (1,), (0, 0), (1, 0), (0, 1), (0, 0, 0), (0, 0, 0, 0)),
    2.5: ((0,), (1,), (2,), (0, 0), (1, 0), (0, 1), (0, 0, 0), (1, 0, 0),
          (0, 1, 0), (0, 0, 1), (0, 0, 0, 0), (0, 0, 0, 0, 0)),
}


class KernelError(ValueError):
    """Spec, tensor and noise do not fit together."""


def _zeta(nm) -> np.ndarray:
    return nm.values if isinstance(nm, NoiseMatrix) else np.asarray(nm, dtype=float)


def _need(z: np.ndarray, index: int):
    if z.shape[-1] <= index:
        raise KernelError(f"noise has basis indices up to {z.shape[-1] - 1}, need {index}")


def check_order(order) -> float:
    order = float(order)
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order}")
    return order


def families_for_order(order) -> tuple[tuple[int, ...], ...]:
    return _ORDER_FAMILIES[check_order(order)]


def truncated_families(order) -> tuple[tuple[int, ...], ...]:
    return tuple(w for w in families_for_order(order) if len(w) >= 2)


# -- single integrals ---------------------------------------------------------

def _single(l: int, z: np.ndarray, delta: float) -> np.ndarray:
    """z has the basis index on the last axis."""
    _need(z, l)
    if l == 0:
        return math.sqrt(delta) * z[..., 0]
    if l == 1:
        return -delta ** 1.5 / 2 * (z[..., 0] + z[..., 1] / math.sqrt(3))
    if l == 2:
        return delta ** 2.5 / 3 * (z[..., 0] + math.sqrt(3) / 2 * z[..., 1]
                                   + z[..., 2] / (2 * math.sqrt(5)))
    raise ValueError("weight exponent must be 0, 1 or 2")


def strat_single(l: int, nm, i: int, delta: float):
    return _single(l, _zeta(nm)[..., i - 1, :], delta)


# -- double integrals: closed forms --------------------------------------------

def _pair_sum(a: np.ndarray, b: np.ndarray, w: np.ndarray, shift: int) -> np.ndarray:
    """sum_i w_i a_i b_{i + shift} over i = 0..len(w) - 1."""
    n = len(w)
    if n == 0:
        return np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]))
    return np.einsum("...i,...i,i->...", a[..., :n], b[..., shift:shift + n], w)


def _i00(z1: np.ndarray, z2: np.ndarray, q: int, delta: float) -> np.ndarray:
    _need(z1, q)
    i = np.arange(1, q + 1)
    w = 1 / np.sqrt(4.0 * i * i - 1)
    s = _pair_sum(z1, z2, w, 1) - _pair_sum(z2, z1, w, 1)
    return delta / 2 * (z1[..., 0] * z2[..., 0] + s)


def _shifted_terms(q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    i = np.arange(q + 1, dtype=float)
    den = np.sqrt((2 * i + 1) * (2 * i + 5)) * (2 * i + 3)
    return (i + 2) / den, (i + 1) / den, 1 / ((2 * i - 1) * (2 * i + 3))


def _i01(z1, z2, q, delta):
    _need(z1, q + 2)
    hi, lo, diag = _shifted_terms(q)
    inner = (z1[..., 0] * z2[..., 1] / math.sqrt(3)
             + _pair_sum(z1, z2, hi, 2) - _pair_sum(z2, z1, lo, 2)
             - _pair_sum(z1, z2, diag, 0))
    return -delta / 2 * _i00(z1, z2, max(q, 1), delta) - delta ** 2 / 4 * inner


def _i10(z1, z2, q, delta):
    _need(z1, q + 2)
    hi, lo, diag = _shifted_terms(q)
    inner = (z2[..., 0] * z1[..., 1] / math.sqrt(3)
             + _pair_sum(z1, z2, lo, 2) - _pair_sum(z2, z1, hi, 2)
             + _pair_sum(z1, z2, diag, 0))
    return -delta / 2 * _i00(z1, z2, max(q, 1), delta) - delta ** 2 / 4 * inner


_DOUBLE = {(0, 0): _i00, (0, 1): _i01, (1, 0): _i10}


def strat_double(weights, nm, i1: int, i2: int, q: int, delta: float):
    """Truncated expansion of the double integral, i1 innermost.

    The embedded (00) integral inside the weighted forms is truncated at
    max(q, 1) so the leading zeta_0 zeta_1 pair is always present.
    """
    weights = parse_weights(weights)
    if weights not in _DOUBLE:
        raise KernelError(f"no closed form for weights {weights}")
    if q < 0:
        raise ValueError("q must be nonnegative")
    z = _zeta(nm)
    return _DOUBLE[weights](z[..., i1 - 1, :], z[..., i2 - 1, :], q, delta)


def strat_double_all(weights, z: np.ndarray, q: int, delta: float) -> np.ndarray:
    """All component pairs at once: result[..., i1 - 1, i2 - 1]."""
    weights = parse_weights(weights)
    z1 = z[..., :, None, :]
    z2 = z[..., None, :, :]
    return _DOUBLE[weights](z1, z2, q, delta)


def double_index_set(weights, q: int) -> list[tuple[int, int]]:
    """Index pairs (j1, j2) carried by the closed form at truncation q."""
    weights = parse_weights(weights)
    if weights == (0, 0):
        pairs = {(j, j) for j in range(q + 1)}
        pairs |= {(j - 1, j) for j in range(1, q + 1)} | {(j, j - 1) for j in range(1, q + 1)}
        return sorted(pairs)
    if weights not in _DOUBLE:
        raise KernelError(f"no closed form for weights {weights}")
    pairs = {(0, 0), (0, 1), (1, 0)}
    pairs |= {(i - 1, i) for i in range(1, q + 1)} | {(i, i - 1) for i in range(1, q + 1)}
    for i in range(q + 1):
        pairs |= {(i, i), (i, i + 2), (i + 2, i)}
    return sorted(pairs)


def double_diagonal_sum(weights, q: int, delta: float) -> float:
    """sum over diagonal pairs (j, j) of the closed form of C_{jj}."""
    weights = parse_weights(weights)
    t = build_tensor(IntegralSpec(weights), q, delta)
    diag = {j for j, k in double_index_set(weights, q) if j == k and j <= q}
    return math.fsum(t.values[j, j] for j in diag)


def ito_double(weights, nm, i1: int, i2: int, q: int, delta: float):
    """Double expansion with the diagonal C_{jj} mass removed when i1 == i2."""
    val = strat_double(weights, nm, i1, i2, q, delta)
    if i1 != i2:
        return val
    return val - double_diagonal_sum(weights, q, delta)


def strat_to_ito(weights, value, i1: int, i2: int, delta: float):
    weights = parse_weights(weights)
    if i1 != i2:
        return value
    if weights == (0, 0):
        return value - delta / 2
    if weights in ((1, 0), (0, 1)):
        return value + delta ** 2 / 4
    raise KernelError(f"no conversion for weights {weights}")


# -- tensor contractions ------------------------------------------------------

def _check_tensor(spec: IntegralSpec, tensor: CoefficientTensor):
    if tensor.spec.weights != spec.weights:
        raise KernelError(f"tensor is for {tensor.spec}, not {spec}")


def strat_tensor(spec: IntegralSpec, nm, tensor: CoefficientTensor):
    """sum C_{j_k..j_1} zeta_{j_1}^{(i_1)} ... zeta_{j_k}^{(i_k)}."""
    _check_tensor(spec, tensor)
    if spec.components is None:
        raise KernelError("spec needs components")
    z = _zeta(nm)
    _need(z, tensor.q)
    rows = [z[..., i - 1, : tensor.q + 1] for i in spec.components]
    if z.ndim == 2:
        prod = tensor.values
        for axis, r in enumerate(rows):
            shape = [1] * spec.k
            shape[axis] = -1
            prod = prod * r.reshape(shape)
        return math.fsum(prod.ravel())
    subs = [list(range(spec.k))]
    ops = [tensor.values]
    lead = spec.k
    for axis, r in enumerate(rows):
        ops.append(r)
        subs.append([lead, axis])
    args = [x for pair in zip(ops, subs) for x in pair]
    return np.einsum(*args, [lead], optimize=True)


def strat_tensor_all(tensor: CoefficientTensor, z: np.ndarray) -> np.ndarray:
    """Every component combination: result[n, i_1 - 1, ..., i_k - 1]."""
    k = tensor.k
    zz = np.asarray(z)[..., : tensor.q + 1]
    n_ax, comp0 = 2 * k, 2 * k + 1
    args = [tensor.values, list(range(k))]
    for axis in range(k):
        args += [zz, [n_ax, comp0 + axis, axis]]
    out = [n_ax] + [comp0 + a for a in range(k)]
    return np.einsum(*args, out, optimize=True)


def _matchings(positions: list[int]):
    """All partial matchings of positions into unordered pairs."""
    if not positions:
        yield []
        return
    first, rest = positions[0], positions[1:]
    for sub in _matchings(rest):
        yield sub
    for idx, other in enumerate(rest):
        remaining = rest[:idx] + rest[idx + 1:]
        for sub in _matchings(remaining):
            yield [(first, other)] + sub


def ito_expansion(spec: IntegralSpec, nm, tensor: CoefficientTensor):
    """Prelimit Ito expansion: products of zeta with all pairing corrections."""
    _check_tensor(spec, tensor)
    if spec.components is None:
        raise KernelError("spec needs components")
    z = _zeta(nm)
    _need(z, tensor.q)
    k = spec.k
    comps = spec.components
    rows = [z[..., i - 1, : tensor.q + 1] for i in comps]
    total = 0.0
    for match in _matchings(list(range(k))):
        if any(comps[a] != comps[b] for a, b in match):
            continue
        # paired positions share one summation label
        label = list(range(k))
        for a, b in match:
            label[b] = a
        paired = {p for pair in match for p in pair}
        args = [tensor.values, label]
        for axis in range(k):
            if axis not in paired:
                args += [rows[axis], [Ellipsis, axis]]
        term = np.einsum(*args, [Ellipsis], optimize=len(args) > 4)
        total = total + (-1) ** len(match) * term
    return total


# -- joint realization for one step -----------------------------------------

@dataclass(frozen=True, eq=False)
class IntegralBatch:
    """One joint realization of every integral a scheme step consumes.

    ``values[w]`` has shape (*lead, m, ..., m) with one component axis per
    integration position, innermost first.
    """

    delta: float
    order: float
    q_levels: Mapping[tuple[int, ...], int]
    values: dict = field(repr=False)

    def __getitem__(self, weights):
        return self.values[parse_weights(weights)]


def required_qmax(order, q_levels: Mapping) -> int:
    fams = families_for_order(order)
    need = max(w[0] for w in fams if len(w) == 1)
    for w in fams:
        if len(w) < 2:
            continue
        q = q_levels[w]
        if w == (0, 0):
            need = max(need, q)
        elif len(w) == 2:
            need = max(need, q + 2)
        else:
            need = max(need, q)
    return need


def normalize_q_levels(order, q_levels: Mapping) -> dict:
    out = {}
    given = {parse_weights(w): int(q) for w, q in q_levels.items()}
    for w in truncated_families(order):
        if w not in given:
            raise KernelError(f"missing truncation level for family ({''.join(map(str, w))})")
        if given[w] < 0:
            raise ValueError("truncation levels must be nonnegative")
        out[w] = given[w]
    return out


def sample_batch(order, nm, q_levels: Mapping, delta: float,
                 tensors: Mapping | None = None) -> IntegralBatch:
    """Realize all integrals for one step from a single noise draw."""
    order = check_order(order)
    q_levels = normalize_q_levels(order, q_levels)
    z = _zeta(nm)
    _need(z, required_qmax(order, q_levels))
    squeeze = z.ndim == 2
    if squeeze:
        z = z[None]
    vals = {}
    for w in families_for_order(order):
        if len(w) == 1:
            vals[w] = _single(w[0], z, delta)
        elif len(w) == 2:
            vals[w] = strat_double_all(w, z, q_levels[w], delta)
        else:
            t = None if tensors is None else tensors.get(w)
            if t is None or t.q != q_levels[w] or t.delta != delta:
                t = build_tensor(IntegralSpec(w), q_levels[w], delta)
            vals[w] = strat_tensor_all(t, z)
    if squeeze:
        vals = {w: v[0] for w, v in vals.items()}
    return IntegralBatch(delta, order, q_levels, vals)


def coefficient_tensors(order, q_levels: Mapping, delta: float) -> dict:
    """Prebuilt tensors for the k >= 3 families, reusable across steps."""
    q_levels = normalize_q_levels(order, q_levels)
    return {w: build_tensor(IntegralSpec(w), q, delta)
            for w, q in q_levels.items() if len(w) >= 3}

