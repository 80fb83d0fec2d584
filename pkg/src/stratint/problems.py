"""Built-in test problems, registered by id."""

from __future__ import annotations

import numpy as np
import sympy as sp

from .operators import SymbolicProvider
from .scheme import SdeProblem

GBM_ALPHA = 1.5
GBM_BETA = 0.1

BILINEAR_A0 = ((-0.5, 0.3), (0.1, -0.4))
BILINEAR_A1 = ((0.2, 0.5), (-0.3, 0.1))
BILINEAR_A2 = ((0.1, -0.4), (0.6, 0.2))


def gbm(alpha: float = GBM_ALPHA, beta: float = GBM_BETA, x0: float = 1.0) -> SdeProblem:
    """Scalar linear SDE dx = alpha x dt + beta x dW."""
    x, t = sp.symbols("x1 t")
    prov = SymbolicProvider([alpha * x], [[beta * x]], [x], t)

    def exact(x0_, t_, w):
        return np.asarray(x0_) * np.exp((alpha - beta ** 2 / 2) * t_ + beta * np.asarray(w))

    return SdeProblem(1, 1, prov, "gbm", exact, (x0,))


def drift(x0: float = 1.0) -> SdeProblem:
    """Pure decay dx = -x dt with a vanishing noise column."""
    x, t = sp.symbols("x1 t")
    prov = SymbolicProvider([-x], [[0]], [x], t)

    def exact(x0_, t_, w):
        return np.asarray(x0_) * np.exp(-t_) + 0 * np.asarray(w)

    return SdeProblem(1, 1, prov, "drift", exact, (x0,))


def bilinear2(x0=(1.0, 0.5)) -> SdeProblem:
    """Two-dimensional bilinear SDE with noncommuting noise matrices."""
    x1, x2, t = sp.symbols("x1 x2 t")
    X = sp.Matrix([x1, x2])
    a = sp.Matrix(BILINEAR_A0) * X
    B = (sp.Matrix(BILINEAR_A1) * X).row_join(sp.Matrix(BILINEAR_A2) * X)
    prov = SymbolicProvider(list(a), B.tolist(), [x1, x2], t)
    return SdeProblem(2, 2, prov, "bilinear2", None, tuple(x0))


PROBLEMS = {"gbm": gbm, "drift": drift, "bilinear2": bilinear2}


def get_problem(name: str) -> SdeProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
