"""Explicit one-step strong Taylor-Stratonovich schemes of orders 1.0-2.5."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
import math
import os
from typing import Callable, Mapping

import numpy as np

from .coefficients import IntegralSpec, parse_weights, weights_label
from .errors import select_q
from .kernels import (
    IntegralBatch,
    check_order,
    coefficient_tensors,
    required_qmax,
    sample_batch,
    truncated_families,
)
from .noise import sample_noise_paths
from .operators import ORDER_ROSTER

DEFAULT_BLOWUP = 1e12


class NumericalFailure(ArithmeticError):
    """A scheme term evaluated to a non-finite value."""

    def __init__(self, term: str, detail: str = ""):
        self.term = term
        super().__init__(f"non-finite value in term {term}" + (f": {detail}" if detail else ""))


@dataclass
class SdeProblem:
    """dx = a(x, t) dt + B(x, t) dW with a derivative provider.

    ``exact`` optionally maps (x0, t, W_t) to the pathwise solution, with
    x0 of shape (N, n), t scalar and W_t of shape (N, m).
    """

    n: int
    m: int
    provider: object
    name: str = "custom"
    exact: Callable | None = None
    x0: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.provider.n, self.provider.m) != (self.n, self.m):
            raise ValueError("provider dimensions do not match the problem")


@dataclass
class SchemeConfig:
    order: float
    delta: float
    q_levels: dict = field(default_factory=dict)
    seed: int = 0
    c_target: float = 1.0

    def __post_init__(self):
        self.order = check_order(self.order)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.c_target <= 0:
            raise ValueError("C_target must be positive")
        self.q_levels = {parse_weights(w): int(q) for w, q in self.q_levels.items()}

    def resolved_q_levels(self, m: int) -> dict:
        """Truncation levels for every family of the order, auto-filling gaps."""
        out = {}
        for w in truncated_families(self.order):
            if w in self.q_levels:
                out[w] = self.q_levels[w]
            else:
                out[w] = auto_q(w, self.delta, self.c_target, m)
        return out


def _patterns(k: int, m: int):
    """Equality patterns of k components drawn from m (restricted growth strings)."""
    def rec(prefix, top):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        for c in range(1, min(top + 1, m) + 1):
            yield from rec(prefix + [c], max(top, c))
    yield from rec([], 0)


@lru_cache(maxsize=256)
def auto_q(weights: tuple[int, ...], delta: float, c_target: float, m: int) -> int:
    """Largest selected q over all component patterns possible with m noises."""
    return max(select_q(IntegralSpec(weights, p), delta, c_target)
               for p in _patterns(len(weights), m))


@dataclass
class StateTrajectory:
    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray
    path: int = 0
    blown_up: bool = False


def modified_drift(problem: SdeProblem, x, t) -> np.ndarray:
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    out = problem.provider.evaluate(["abar"], x2, t)["abar"]
    return out if np.ndim(x) == 2 else out[0]


def apply_operators(problem: SdeProblem, x, t, order: float = 2.5) -> dict:
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    return problem.provider.evaluate(ORDER_ROSTER[check_order(order)], x2, t)


def _c(op: np.ndarray, integral: np.ndarray) -> np.ndarray:
    """sum over component axes of op[N, v, i...] * integral[N, i...]."""
    k = integral.ndim - 1
    letters = "abcde"[:k]
    return np.einsum(f"Nv{letters},N{letters}->Nv", op, integral)


GROUPS = ("B", "abar", "GB", "Gabar_LbarB", "GGB", "Lbar_abar", "double2", "GGGB",
          "LLa", "single3", "triple3", "GGGGB")
ORDER_GROUPS = {1.0: GROUPS[:3], 1.5: GROUPS[:6], 2.0: GROUPS[:8], 2.5: GROUPS}


def step_terms(order: float, ops: Mapping, batch: IntegralBatch) -> list[tuple[str, np.ndarray]]:
    """Increment of each term group, in scheme order, for a batch of states."""
    order = check_order(order)
    d = batch.delta
    I = batch.values
    i0, i1 = I[(0,)], I.get((1,))
    terms = []
    for g in ORDER_GROUPS[order]:
        if g == "B":
            v = _c(ops["B"], i0)
        elif g == "abar":
            v = d * ops["abar"]
        elif g == "GB":
            v = _c(ops["GB"], I[(0, 0)])
        elif g == "Gabar_LbarB":
            v = _c(ops["Gabar"], d * i0 + i1) - _c(ops["LbarB"], i1)
        elif g == "GGB":
            v = _c(ops["GGB"], I[(0, 0, 0)])
        elif g == "Lbar_abar":
            v = d * d / 2 * ops["Lbar_abar"]
        elif g == "double2":
            i10, i01 = I[(1, 0)], I[(0, 1)]
            v = (_c(ops["GLbarB"], i10 - i01) - _c(ops["LbarGB"], i10)
                 + _c(ops["GGabar"], i01 + d * I[(0, 0)]))
        elif g == "GGGB":
            v = _c(ops["GGGB"], I[(0, 0, 0, 0)])
        elif g == "LLa":
            v = d ** 3 / 6 * ops["LLa"]
        elif g == "single3":
            i2 = I[(2,)]
            v = (_c(ops["GLbar_abar"], i2 / 2 + d * i1 + d * d / 2 * i0)
                 + _c(ops["LbarLbarB"], i2) / 2
                 - _c(ops["LbarGabar"], i2 + d * i1))
        elif g == "triple3":
            i100, i010, i001 = I[(1, 0, 0)], I[(0, 1, 0)], I[(0, 0, 1)]
            v = (_c(ops["GLbarGB"], i100 - i010) + _c(ops["GGLbarB"], i010 - i001)
                 + _c(ops["GGGabar"], d * I[(0, 0, 0)] + i001)
                 - _c(ops["LbarGGB"], i100))
        else:
            v = _c(ops["GGGGB"], I[(0, 0, 0, 0, 0)])
        terms.append((g, v))
    return terms


def _as_batch_rows(batch: IntegralBatch) -> IntegralBatch:
    if batch.values[(0,)].ndim == 1:
        return IntegralBatch(batch.delta, batch.order, batch.q_levels,
                             {w: v[None] for w, v in batch.values.items()})
    return batch


def step(problem: SdeProblem, config: SchemeConfig, x, t, batch: IntegralBatch) -> np.ndarray:
    """One step of the scheme; raises NumericalFailure naming the bad term."""
    if not math.isclose(batch.delta, config.delta, rel_tol=1e-12):
        raise ValueError("batch step size differs from the configuration")
    if check_order(batch.order) < config.order:
        raise ValueError("batch was realized for a lower order")
    single = np.ndim(x) == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    ops = apply_operators(problem, x2, t, config.order)
    for name, v in ops.items():
        if not np.all(np.isfinite(v)):
            raise NumericalFailure(name)
    out = x2.copy()
    for name, inc in step_terms(config.order, ops, _as_batch_rows(batch)):
        if not np.all(np.isfinite(inc)):
            raise NumericalFailure(name)
        out = out + inc
    return out[0] if single else out


class _Runner:
    def __init__(self, problem: SdeProblem, config: SchemeConfig, steps: int,
                 blowup: float):
        self.problem, self.config, self.steps, self.blowup = problem, config, steps, blowup
        self.q = config.resolved_q_levels(problem.m)
        self.qmax = required_qmax(config.order, self.q)
        self.tensors = coefficient_tensors(config.order, self.q, config.delta)
        self.names = ORDER_ROSTER[config.order]

    def run(self, x0: np.ndarray, paths: np.ndarray):
        P, n, m = len(paths), self.problem.n, self.problem.m
        d = self.config.delta
        states = np.empty((self.steps + 1, P, n))
        incs = np.empty((self.steps, P, m))
        states[0] = x0
        alive = np.ones(P, dtype=bool)
        last = np.full(P, self.steps)
        x = np.array(np.broadcast_to(x0, (P, n)), dtype=float)
        for s in range(self.steps):
            z = sample_noise_paths(self.config.seed, paths, s, m, self.qmax)
            incs[s] = math.sqrt(d) * z[:, :, 0]
            idx = np.flatnonzero(alive)
            if idx.size:
                batch = sample_batch(self.config.order, z[idx], self.q, d, self.tensors)
                with np.errstate(all="ignore"):
                    ops = self.problem.provider.evaluate(self.names, x[idx], s * d)
                    new = x[idx] + sum(v for _, v in step_terms(self.config.order, ops, batch))
                bad = ~np.all(np.isfinite(new), axis=1) | (np.abs(new).max(axis=1) > self.blowup)
                x[idx] = np.where(bad[:, None], x[idx], new)
                last[idx[bad]] = s
                alive[idx[bad]] = False
            states[s + 1] = x
        return states, incs, last


def simulate(problem: SdeProblem, config: SchemeConfig, x0, T_end: float, n_paths: int,
             seed: int | None = None, threads: int | None = None, chunk: int = 256,
             blowup: float = DEFAULT_BLOWUP) -> list[StateTrajectory]:
    """Simulate independent paths; path p uses noise keyed by (seed, p, step)."""
    if n_paths < 0:
        raise ValueError("n_paths must be nonnegative")
    if n_paths == 0:
        return []
    if seed is not None:
        config = SchemeConfig(config.order, config.delta, dict(config.q_levels), seed,
                              config.c_target)
    steps = round(T_end / config.delta)
    if steps < 1 or abs(steps * config.delta - T_end) > 1e-12 * max(1.0, abs(T_end)):
        raise ValueError("T_end must be a positive multiple of delta")
    x0 = np.asarray(x0, dtype=float).reshape(problem.n)
    runner = _Runner(problem, config, steps, blowup)
    chunks = [np.arange(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]
    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: runner.run(x0, p), chunks))
    else:
        results = [runner.run(x0, p) for p in chunks]
    times = np.arange(steps + 1) * config.delta
    out = []
    for paths, (states, incs, last) in zip(chunks, results):
        for r, p in enumerate(paths):
            blown = last[r] < steps
            stop = last[r] + 1 if blown else steps + 1
            out.append(StateTrajectory(times[:stop], states[:stop, r].copy(),
                                       incs[:stop - 1, r].copy(), int(p), bool(blown)))
    return out


def describe_q_levels(q_levels: Mapping) -> str:
    return ",".join(f"{weights_label(w)}={q}" for w, q in sorted(q_levels.items()))
