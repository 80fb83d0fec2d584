"""Keyed standard Gaussian variates zeta_j^{(i)}.

Every (seed, path, step, component) tuple addresses its own Philox stream:
the 128-bit key is the seed and the counter words carry the remaining
coordinates. Normals come from numpy's ziggurat transform of that stream,
so zeta_0..zeta_q of a component are a prefix of zeta_0..zeta_{q'} for
q' > q, and results do not depend on evaluation order or threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StreamKey:
    seed: int
    path: int = 0
    step: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.path < 0 or self.step < 0:
            raise ValueError("path and step must be nonnegative")


@dataclass(frozen=True, eq=False)
class NoiseMatrix:
    """values[i - 1, j] holds zeta_j^{(i)}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("noise matrix must be two-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("noise matrix has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def qmax(self) -> int:
        return self.values.shape[1] - 1

    def zeta(self, i: int, j: int) -> float:
        return float(self.values[i - 1, j])


def _generator(seed: int, path: int, step: int, comp: int) -> np.random.Generator:
    counter = np.array([0, comp, step, path], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def component_stream(seed: int, path: int, step: int, comp: int, size: int) -> np.ndarray:
    return _generator(seed, path, step, comp).standard_normal(size)


def sample_noise(key: StreamKey, m: int, qmax: int) -> NoiseMatrix:
    if m < 1 or qmax < 0:
        raise ValueError("need m >= 1 and qmax >= 0")
    vals = np.stack([component_stream(key.seed, key.path, key.step, i, qmax + 1)
                     for i in range(m)])
    return NoiseMatrix(vals)


class _StreamCursor:
    """Reuses one Philox instance and rewinds it to a counter per stream.

    Rewinding gives exactly the variates of a freshly keyed generator at a
    fraction of the construction cost.
    """

    def __init__(self, seed: int):
        self._bg = np.random.Philox(key=seed)
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def normals(self, path: int, step: int, comp: int, size: int) -> np.ndarray:
        st = self._state
        st["state"]["counter"][:] = (0, comp, step, path)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen.standard_normal(size)


def sample_noise_paths(seed: int, paths, step: int, m: int, qmax: int) -> np.ndarray:
    """Noise for many paths at one step, shape (len(paths), m, qmax + 1).

    Row p equals ``sample_noise(StreamKey(seed, paths[p], step), m, qmax).values``.
    """
    paths = np.asarray(paths, dtype=np.int64).ravel()
    out = np.empty((paths.size, m, qmax + 1))
    cur = _StreamCursor(seed)
    for r, p in enumerate(paths):
        for i in range(m):
            out[r, i] = cur.normals(int(p), step, i, qmax + 1)
    return out


def wiener_increment(nm: NoiseMatrix, i: int, delta: float) -> float:
    if not 1 <= i <= nm.m:
        raise ValueError(f"component {i} outside 1..{nm.m}")
    return float(np.sqrt(delta) * nm.values[i - 1, 0])
