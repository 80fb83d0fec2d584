"""Coefficient functions of the Taylor-Stratonovich scheme.

Operators act on vector fields f(x, t) with values laid out as
(value, c_1, ..., c_r): applying G inserts its component axis right after
the value axis, so G_{i3} G_{i2} B_{i1} is stored as [v, i3, i2, i1].

    G_i f  = sum_j B_{ji} df/dx_j
    L f    = df/dt + a . grad f + 1/2 sum_k (B_k B_k^T) : hess f
    abar   = a - 1/2 sum_k G_k B_k
    Lbar f = L f - 1/2 sum_k G_k G_k f = df/dt + abar . grad f

Two providers evaluate the roster: ``SymbolicProvider`` differentiates
sympy expressions exactly, ``FiniteDifferenceProvider`` nests fourth-order
central differences around numeric callbacks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import sympy as sp

# name -> (operators applied outermost first, base field, derivative order)
ROSTER: dict[str, tuple[tuple[str, ...], str, int]] = {
    "B": ((), "B", 0),
    "abar": ((), "abar", 1),
    "GB": (("G",), "B", 1),
    "Gabar": (("G",), "abar", 2),
    "LbarB": (("Lbar",), "B", 2),
    "GGB": (("G", "G"), "B", 2),
    "Lbar_abar": (("Lbar",), "abar", 3),
    "GLbarB": (("G", "Lbar"), "B", 3),
    "LbarGB": (("Lbar", "G"), "B", 3),
    "GGabar": (("G", "G"), "abar", 3),
    "GGGB": (("G", "G", "G"), "B", 3),
    "LLa": (("L", "L"), "a", 4),
    "GLbar_abar": (("G", "Lbar"), "abar", 4),
    "LbarLbarB": (("Lbar", "Lbar"), "B", 4),
    "LbarGabar": (("Lbar", "G"), "abar", 4),
    "GLbarGB": (("G", "Lbar", "G"), "B", 4),
    "GGLbarB": (("G", "G", "Lbar"), "B", 4),
    "GGGabar": (("G", "G", "G"), "abar", 4),
    "LbarGGB": (("Lbar", "G", "G"), "B", 4),
    "GGGGB": (("G", "G", "G", "G"), "B", 4),
}

ORDER_ROSTER: dict[float, tuple[str, ...]] = {
    1.0: ("B", "abar", "GB"),
    1.5: ("B", "abar", "GB", "Gabar", "LbarB", "GGB", "Lbar_abar"),
    2.0: ("B", "abar", "GB", "Gabar", "LbarB", "GGB", "Lbar_abar",
          "GLbarB", "LbarGB", "GGabar", "GGGB"),
}
ORDER_ROSTER[2.5] = ORDER_ROSTER[2.0] + (
    "LLa", "GLbar_abar", "LbarLbarB", "LbarGabar", "GLbarGB", "GGLbarB",
    "GGGabar", "LbarGGB", "GGGGB")


class MissingDerivativeError(ValueError):
    """The provider cannot supply the derivative order an operator chain needs."""


def roster_shape(name: str, n: int, m: int) -> tuple[int, ...]:
    ops, base, _ = ROSTER[name]
    comps = sum(op == "G" for op in ops) + (base == "B")
    return (n,) + (m,) * comps


def _chain(name: str) -> str:
    ops, base, _ = ROSTER[name]
    return " ".join(ops + (base,))


# -- symbolic ----------------------------------------------------------------

class SymbolicProvider:
    """Exact derivatives of sympy drift and diffusion expressions.

    ``drift`` is a length-n sequence, ``diffusion`` an n x m nested sequence,
    both in the symbols ``xs`` and ``t``.
    """

    def __init__(self, drift, diffusion, xs: Sequence[sp.Symbol], t: sp.Symbol):
        self.xs = tuple(xs)
        self.t = t
        self.a = np.array([sp.sympify(e) for e in drift], dtype=object)
        self.B = np.array([[sp.sympify(e) for e in row] for row in diffusion], dtype=object)
        self.n, self.m = self.B.shape
        if self.a.shape != (self.n,):
            raise ValueError("drift length must match the diffusion row count")
        self._sym: dict[str, np.ndarray] = {}
        self._fn: dict[str, Callable] = {}
        ab = self.a.copy()
        GB = self._G(self.B)  # [v, i, k]
        for k in range(self.m):
            ab = ab - GB[:, k, k] / 2
        self.abar = np.vectorize(sp.expand, otypes=[object])(ab)

    def _diff(self, f: np.ndarray, *syms) -> np.ndarray:
        return np.vectorize(lambda e: sp.diff(e, *syms), otypes=[object])(f)

    def _G(self, f: np.ndarray) -> np.ndarray:
        grads = [self._diff(f, x) for x in self.xs]
        out = np.empty((f.shape[0], self.m) + f.shape[1:], dtype=object)
        for i in range(self.m):
            acc = 0
            for j in range(self.n):
                acc = acc + self.B[j, i] * grads[j]
            out[:, i] = acc
        return out

    def _Lbar(self, f: np.ndarray) -> np.ndarray:
        acc = self._diff(f, self.t)
        for j in range(self.n):
            acc = acc + self.abar[j] * self._diff(f, self.xs[j])
        return acc

    def _L(self, f: np.ndarray) -> np.ndarray:
        acc = self._diff(f, self.t)
        for j in range(self.n):
            acc = acc + self.a[j] * self._diff(f, self.xs[j])
        for k in range(self.m):
            for l in range(self.n):
                for i in range(self.n):
                    coef = self.B[l, k] * self.B[i, k] / 2
                    if coef != 0:
                        acc = acc + coef * self._diff(f, self.xs[l], self.xs[i])
        return acc

    def symbolic(self, name: str) -> np.ndarray:
        if name not in ROSTER:
            raise KeyError(f"unknown roster function {name!r}")
        if name not in self._sym:
            ops, base, _ = ROSTER[name]
            f = {"B": self.B, "a": self.a, "abar": self.abar}[base]
            for op in reversed(ops):
                f = {"G": self._G, "L": self._L, "Lbar": self._Lbar}[op](f)
            self._sym[name] = f
        return self._sym[name]

    def _compiled(self, name: str) -> Callable:
        if name not in self._fn:
            expr = self.symbolic(name)
            self._fn[name] = sp.lambdify(self.xs + (self.t,), list(expr.ravel()),
                                         modules="numpy", cse=True)
        return self._fn[name]

    def evaluate(self, names: Sequence[str], x: np.ndarray, t) -> dict[str, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (N,))
        args = [x[:, j] for j in range(self.n)] + [t]
        out = {}
        for name in names:
            vals = self._compiled(name)(*args)
            flat = np.stack([np.broadcast_to(np.asarray(v, dtype=float), (N,)) for v in vals],
                            axis=1)
            out[name] = flat.reshape((N,) + roster_shape(name, self.n, self.m))
        return out

    def drift(self, x, t) -> np.ndarray:
        return self._eval_base("a", self.a, x, t)

    def diffusion(self, x, t) -> np.ndarray:
        return self._eval_base("B_raw", self.B, x, t)

    def _eval_base(self, key: str, expr: np.ndarray, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N = x.shape[0]
        if key not in self._fn:
            self._fn[key] = sp.lambdify(self.xs + (self.t,), list(expr.ravel()), modules="numpy")
        t = np.broadcast_to(np.asarray(t, dtype=float), (N,))
        vals = self._fn[key](*[x[:, j] for j in range(self.n)], t)
        flat = np.stack([np.broadcast_to(np.asarray(v, dtype=float), (N,)) for v in vals], axis=1)
        return flat.reshape((N,) + expr.shape)


# -- finite differences ------------------------------------------------------

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

# step per total derivative order of a roster chain, relative to 1 + |x|
DEFAULT_FD_STEPS = {1: 1e-3, 2: 3e-3, 3: 6e-3, 4: 1e-2}


def _grad(f: Field, h: float) -> Field:
    """Fourth-order central gradient: result[N, j, ...]."""

    def g(x, t):
        N, n = x.shape
        step = h * (1.0 + np.abs(x))  # (N, n)
        offsets = np.array([2.0, 1.0, -1.0, -2.0])
        # points: (offset, j, N, n)
        pts = np.broadcast_to(x, (4, n, N, n)).copy()
        for j in range(n):
            pts[:, j, :, j] += offsets[:, None] * step[None, :, j]
        vals = f(pts.reshape(-1, n), np.tile(t, 4 * n))
        vals = vals.reshape((4, n, N) + vals.shape[1:])
        d = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3])
        d = d / (12 * step.T.reshape((n, N) + (1,) * (d.ndim - 2)))
        return np.moveaxis(d, 0, 1)

    return g


def _dt(f: Field, h: float) -> Field:
    def g(x, t):
        N = x.shape[0]
        step = h * (1.0 + np.abs(t))
        offsets = np.array([2.0, 1.0, -1.0, -2.0])
        tt = (t[None, :] + offsets[:, None] * step[None, :]).ravel()
        vals = f(np.tile(x, (4, 1)), tt)
        vals = vals.reshape((4, N) + vals.shape[1:])
        d = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3])
        return d / (12 * step.reshape((N,) + (1,) * (d.ndim - 1)))

    return g


class FiniteDifferenceProvider:
    """Roster functions from numeric drift a(x, t) -> (N, n) and
    diffusion B(x, t) -> (N, n, m) by nested central differences."""

    def __init__(self, drift: Field, diffusion: Field, n: int, m: int,
                 steps: dict[int, float] | None = None, max_order: int = 4,
                 chunk: int = 64):
        self._a = drift
        self._B = diffusion
        self.n, self.m = n, m
        self.steps = dict(DEFAULT_FD_STEPS if steps is None else steps)
        self.max_order = max_order
        self.chunk = chunk

    def drift(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self._a(x, np.broadcast_to(np.asarray(t, float), (x.shape[0],))))

    def diffusion(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self._B(x, np.broadcast_to(np.asarray(t, float), (x.shape[0],))))

    def _abar(self, h: float) -> Field:
        gB = _grad(self._B, h)

        def f(x, t):
            B = self._B(x, t)
            # sum_k sum_j B_jk dB_lk/dx_j
            return self._a(x, t) - 0.5 * np.einsum("Njk,Njlk->Nl", B, gB(x, t))

        return f

    def _G(self, f: Field, h: float) -> Field:
        gf = _grad(f, h)

        def g(x, t):
            d = gf(x, t)  # (N, j, v, ...)
            return np.einsum("Nji,Njv...->Nvi...", self._B(x, t), d)

        return g

    def _Lbar(self, f: Field, h: float) -> Field:
        gf, tf, ab = _grad(f, h), _dt(f, h), self._abar(h)

        def g(x, t):
            return tf(x, t) + np.einsum("Nj,Nj...->N...", ab(x, t), gf(x, t))

        return g

    def _L(self, f: Field, h: float) -> Field:
        gf, tf = _grad(f, h), _dt(f, h)
        hf = _grad(gf, h)

        def g(x, t):
            B = self._B(x, t)
            out = tf(x, t) + np.einsum("Nj,Nj...->N...", self._a(x, t), gf(x, t))
            return out + 0.5 * np.einsum("Nlk,Nik,Nli...->N...", B, B, hf(x, t))

        return g

    def field(self, name: str) -> Field:
        if name not in ROSTER:
            raise KeyError(f"unknown roster function {name!r}")
        ops, base, order = ROSTER[name]
        if order > self.max_order:
            raise MissingDerivativeError(
                f"{_chain(name)} needs derivatives of order {order}, "
                f"provider is limited to {self.max_order}")
        h = self.steps.get(order, self.steps[max(self.steps)])
        f = {"B": self._B, "a": self._a}.get(base) or self._abar(h)
        for op in reversed(ops):
            f = {"G": self._G, "L": self._L, "Lbar": self._Lbar}[op](f, h)
        return f

    def evaluate(self, names: Sequence[str], x: np.ndarray, t) -> dict[str, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (N,)).copy()
        out = {}
        for name in names:
            f = self.field(name)
            parts = [f(x[s:s + self.chunk], t[s:s + self.chunk])
                     for s in range(0, N, self.chunk)]
            out[name] = np.concatenate(parts, axis=0).reshape(
                (N,) + roster_shape(name, self.n, self.m))
        return out


@dataclass(frozen=True)
class OperatorTable:
    """Roster functions evaluated at one batch of states."""

    values: dict

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]
