"""Monte-Carlo experiments: strong order fits and error-formula checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import Sequence

import numpy as np

from .coefficients import IntegralSpec
from .errors import (
    MIN_MC_SAMPLES,
    mc_error_estimate,
    ms_error_double,
    noise_extent,
    permutation_error_exact,
)
from .noise import sample_noise_paths
from .scheme import SchemeConfig, SdeProblem, simulate

MIN_VALIDATION_SAMPLES = 10_000
R2_THRESHOLD = 0.95
Z_LIMIT = 3.0

# published residual constants: (weights, q, value in units of the kernel norm power)
PUBLISHED_CONSTANTS = (
    ((0, 0, 0), 6, 0.01956000),
    ((1, 0, 0), 2, 0.00815429),
    ((0, 1, 0), 2, 0.01739030),
    ((0, 0, 1), 2, 0.02528010),
    ((0, 0, 0, 0), 2, 0.02360840),
    ((0, 0, 0, 0, 0), 1, 0.00759105),
)
CONSTANT_TOL = 1e-6


@dataclass
class ConvergenceReport:
    deltas: list[float]
    rms_errors: list[float]
    fitted_order: float | None
    n_paths: int
    r_squared: float | None = None
    residuals: list[float] = field(default_factory=list)
    status: str = "ok"

    @property
    def inconclusive(self) -> bool:
        return self.status == "inconclusive"


def fit_order(deltas: Sequence[float], errors: Sequence[float]):
    """Least-squares slope of log(error) against log(delta), with R^2."""
    lx, ly = np.log(deltas), np.log(errors)
    slope, icept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + icept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return float(slope), r2, [float(r) for r in res]


def endpoint_rms(problem: SdeProblem, config: SchemeConfig, x0, T_end: float,
                 n_paths: int, threads: int | None = None) -> float:
    trajs = simulate(problem, config, x0, T_end, n_paths, threads=threads)
    if any(tr.blown_up for tr in trajs):
        raise FloatingPointError("a path blew up during the convergence experiment")
    xT = np.stack([tr.states[-1] for tr in trajs])
    wT = np.stack([tr.increments.sum(axis=0) for tr in trajs])
    exact = problem.exact(np.broadcast_to(np.asarray(x0, float), xT.shape), T_end, wT)
    return float(np.sqrt(np.mean(np.sum((xT - exact) ** 2, axis=1))))


def strong_order_experiment(problem: SdeProblem, template: SchemeConfig,
                            deltas: Sequence[float], n_paths: int, seed: int,
                            x0=None, T_end: float = 1.0, floor: float = 1e-13,
                            threads: int | None = None) -> ConvergenceReport:
    """RMS endpoint error against the exact solution on shared increments."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    deltas = sorted((float(d) for d in deltas), reverse=True)
    if len(deltas) < 3:
        raise ValueError("need at least three step sizes")
    x0 = problem.x0 if x0 is None else x0
    errs = []
    for d in deltas:
        cfg = SchemeConfig(template.order, d, dict(template.q_levels), seed, template.c_target)
        errs.append(endpoint_rms(problem, cfg, x0, T_end, n_paths, threads))
    scale = max(1.0, float(np.max(np.abs(x0))))
    if min(errs) <= floor * scale:
        return ConvergenceReport(deltas, errs, None, n_paths, status="undefined")
    slope, r2, res = fit_order(deltas, errs)
    status = "ok" if r2 >= R2_THRESHOLD else "inconclusive"
    return ConvergenceReport(deltas, errs, slope, n_paths, r2, res, status)


@dataclass
class ValidationRow:
    spec: IntegralSpec
    q: int
    q_ref: int
    form: str
    expected: float
    mc_mean: float
    mc_se: float

    @property
    def z(self) -> float:
        if self.mc_se == 0:
            return 0.0 if self.mc_mean == self.expected else math.inf
        return (self.mc_mean - self.expected) / self.mc_se

    @property
    def passed(self) -> bool:
        return abs(self.z) <= Z_LIMIT


def closed_form_error(spec: IntegralSpec, q: int, delta: float) -> tuple[float, str]:
    """Closed-form error and the expansion form it describes."""
    c = spec.components
    equal = len(set(c)) < len(c)
    if spec.k == 2:
        form = "ito" if equal and spec.weights != (0, 0) else "stratonovich"
        return ms_error_double(spec.weights, q, delta, equal), form
    val, p = permutation_error_exact(spec, q)
    return float(val) * delta ** p, "stratonovich" if not equal else "ito"


def validate_error_formulas(specs: Sequence[IntegralSpec], qs: Sequence[int], delta: float,
                            n_samples: int, seed: int, q_ref: int | None = None
                            ) -> list[ValidationRow]:
    """Compare closed-form errors with Monte-Carlo estimates.

    For nested truncations the error gap E(q) - E(q_ref) equals
    E[(I^{q_ref} - I^q)^2], which is estimated on shared noise.
    """
    if n_samples < MIN_VALIDATION_SAMPLES:
        raise ValueError(f"need at least {MIN_VALIDATION_SAMPLES} samples")
    rows = []
    for spec in specs:
        qr = q_ref if q_ref is not None else max(qs) + (20 if spec.k == 2 else 4)
        m = max(spec.components)
        z = sample_noise_paths(seed, range(n_samples), 0, m, noise_extent(spec, qr))
        e_ref, form = closed_form_error(spec, qr, delta)
        for q in qs:
            e_q, _ = closed_form_error(spec, q, delta)
            mean, se = mc_error_estimate(spec, q, qr, n_samples, delta, seed, form, z=z)
            rows.append(ValidationRow(spec, q, qr, form, e_q - e_ref, mean, se))
    return rows


@dataclass
class ConstantRow:
    weights: tuple[int, ...]
    q: int
    computed: Fraction
    published: float

    @property
    def difference(self) -> float:
        return float(self.computed) - self.published

    @property
    def passed(self) -> bool:
        return abs(self.difference) <= CONSTANT_TOL


def check_published_constants() -> list[ConstantRow]:
    """Residuals I_k - sum C^2 (distinct components) against published values."""
    rows = []
    for w, q, pub in PUBLISHED_CONSTANTS:
        val, _ = permutation_error_exact(IntegralSpec(w), q)
        rows.append(ConstantRow(w, q, val, pub))
    return rows

