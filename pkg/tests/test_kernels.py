import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratint.coefficients import IntegralSpec, build_tensor
from stratint.kernels import (
    KernelError,
    double_index_set,
    families_for_order,
    ito_double,
    ito_expansion,
    required_qmax,
    sample_batch,
    strat_double,
    strat_single,
    strat_tensor,
    strat_to_ito,
)
from stratint.noise import NoiseMatrix, StreamKey, sample_noise, sample_noise_paths

noise_arrays = st.integers(0, 2**32).map(
    lambda s: np.random.default_rng(s).standard_normal((3, 24)))


def _nm(rows):
    return NoiseMatrix(np.array(rows, dtype=float))


def test_single_examples():
    assert strat_single(0, _nm([[2.0, 0, 0]]), 1, 1.0) == 2.0
    assert strat_single(1, _nm([[1.0, math.sqrt(3), 0]]), 1, 1.0) == pytest.approx(-1.0)
    assert strat_single(2, _nm([[0.0, 0, 0]]), 1, 3.0) == 0.0


def test_double_examples():
    nm = _nm([[1.5, 0.2, -0.7], [-0.4, 1.1, 0.3]])
    assert strat_double("00", nm, 1, 2, 0, 0.6) == pytest.approx(0.3 * 1.5 * -0.4)
    for q in (0, 1, 2):
        assert strat_double("00", nm, 1, 1, q, 0.6) == pytest.approx(0.3 * 1.5 ** 2)


@given(noise_arrays, st.integers(0, 20), st.floats(0.01, 5.0))
def test_double_matches_tensor_contraction(z, q, delta):
    """The closed forms equal contractions over their index sets."""
    for w in ("00", "10", "01"):
        t = build_tensor(w, q + 2, delta)
        qq = q if w == "00" else q
        for i1, i2 in ((1, 2), (2, 2)):
            idx = double_index_set(w, qq)
            ref = math.fsum(t.values[a, b] * z[i1 - 1, a] * z[i2 - 1, b] for a, b in idx)
            got = strat_double(w, z, i1, i2, qq, delta)
            assert got == pytest.approx(ref, rel=1e-11, abs=1e-13 * delta ** 2)


@given(noise_arrays, st.integers(0, 20))
def test_antisymmetry(z, q):
    d = 0.7
    lhs = strat_double("00", z, 1, 2, q, d) + strat_double("00", z, 2, 1, q, d)
    assert lhs == pytest.approx(d * z[0, 0] * z[1, 0], rel=1e-13, abs=1e-14)


@given(noise_arrays, st.sampled_from([0, 1, 5, 20]))
def test_ito_minus_stratonovich_double(z, q):
    d = 0.45
    t = build_tensor("00", q, d)
    for comps in ((1, 1), (1, 2)):
        s = strat_double("00", z, *comps, q, d)
        i = ito_expansion(IntegralSpec((0, 0), comps), z, t)
        expect = -d / 2 if comps[0] == comps[1] else 0.0
        assert i - s == pytest.approx(expect, rel=1e-13, abs=1e-15)


def test_ito_k1_and_distinct_cases():
    nm = sample_noise(StreamKey(3), 3, 6)
    t1 = build_tensor("0", 6, 0.2)
    assert ito_expansion(IntegralSpec((0,), (2,)), nm, t1) == \
        pytest.approx(strat_single(0, nm, 2, 0.2), rel=1e-14)
    t3 = build_tensor("010", 4, 0.2)
    spec = IntegralSpec((0, 1, 0), (1, 2, 3))
    assert ito_expansion(spec, nm, t3) == pytest.approx(strat_tensor(spec, nm, t3), rel=1e-13)


def test_tensor_examples():
    nm = _nm([[0.4, 1.0], [-1.2, 0.5], [2.0, 0.1]])
    t = build_tensor("000", 0, 0.5)
    spec = IntegralSpec((0, 0, 0), (1, 2, 3))
    assert strat_tensor(spec, nm, t) == pytest.approx(0.5 ** 1.5 / 6 * 0.4 * -1.2 * 2.0)
    assert strat_tensor(spec, _nm(np.zeros((3, 1))), t) == 0.0
    with pytest.raises(KernelError):
        strat_tensor(spec, nm, build_tensor("100", 0))


def test_strat_to_ito():
    assert strat_to_ito("00", 1.0, 1, 1, 0.4) == pytest.approx(0.8)
    assert strat_to_ito("10", 1.0, 1, 2, 0.4) == 1.0
    assert strat_to_ito("01", 0.0, 2, 2, 2.0) == 1.0
    with pytest.raises(KernelError):
        strat_to_ito("000", 1.0, 1, 1, 1.0)


def test_ito_double_is_centered():
    z = sample_noise_paths(12, range(100_000), 0, 1, 8)
    vals = ito_double("10", z, 1, 1, 4, 1.0)
    assert abs(vals.mean()) <= 3 * vals.std() / math.sqrt(vals.size)


def test_tensor_expectation_repeated_components():
    d, q = 1.0, 6
    t = build_tensor("000", q, d)
    spec = IntegralSpec((0, 0, 0), (1, 1, 2))
    z = sample_noise_paths(31, range(100_000), 0, 2, q)
    vals = strat_tensor(spec, z, t)
    # E[zeta_a zeta_b zeta_c] vanishes unless paired, and component 2 is alone
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean()) <= 3 * se


def test_distinct_tensor_variance():
    d, q = 1.0, 3
    t = build_tensor("100", q, d)
    spec = IntegralSpec((1, 0, 0), (1, 2, 3))
    z = sample_noise_paths(41, range(100_000), 0, 3, q)
    v = strat_tensor(spec, z, t)
    target = float(np.sum(t.values ** 2))
    se = np.std(v ** 2) / math.sqrt(v.size)
    assert abs(np.mean(v ** 2) - target) <= 3 * se


def test_batch_shapes_and_order_sets():
    q = {"00": 2, "10": 1, "01": 1, "000": 1, "100": 1, "010": 1, "001": 1,
         "0000": 1, "00000": 0}
    assert len(families_for_order(2.5)) == 12
    assert (2,) not in families_for_order(2.0)
    assert required_qmax(2.5, {tuple(map(int, k)): v for k, v in q.items()}) == 3
    z = sample_noise_paths(2, range(4), 0, 2, 3)
    b = sample_batch(2.5, z, q, 0.1)
    assert b["00000"].shape == (4, 2, 2, 2, 2, 2)
    nm = NoiseMatrix(z[1])
    b1 = sample_batch(2.5, nm, q, 0.1)
    assert np.allclose(b1["010"], b["010"][1])
    with pytest.raises(KernelError):
        sample_batch(2.0, z, {"00": 1}, 0.1)


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 2**31))
def test_batch_matches_individual_kernels(seed):
    z = np.random.default_rng(seed).standard_normal((2, 6))
    q = {"00": 3, "10": 2, "01": 2, "000": 2, "100": 1, "010": 1, "001": 1,
         "0000": 1, "00000": 1}
    b = sample_batch(2.5, z, q, 0.3)
    assert b["10"][1, 0] == pytest.approx(strat_double("10", z, 2, 1, 2, 0.3), rel=1e-13)
    t = build_tensor("001", 1, 0.3)
    assert b["001"][0, 1, 1] == pytest.approx(
        strat_tensor(IntegralSpec((0, 0, 1), (1, 2, 2)), z, t), rel=1e-12, abs=1e-15)
