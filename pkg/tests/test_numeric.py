import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foresight_dpl import numeric
from foresight_dpl.numeric import Rng, elementwise, matvec, sample_normal, sigmoid, softplus, splitmix64


def test_matvec_example():
    assert np.array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3.0, 7.0])


def test_matvec_dimension_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"2x2.*length 3"):
        matvec(np.eye(2), np.ones(3))


def test_matvec_rejects_non_finite():
    with pytest.raises(ValueError):
        matvec(np.eye(2), [1.0, np.nan])


def test_elementwise_examples():
    assert elementwise([0.0], "sigmoid")[0] == 0.5
    assert elementwise([0.0], "tanh")[0] == 0.0
    assert elementwise([0.0], "softplus")[0] == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(ValueError):
        elementwise([0.0], "relu")


@given(st.floats(-700, 700))
def test_sigmoid_matches_reference(x):
    ref = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
    assert sigmoid(np.float64(x)) == pytest.approx(ref, rel=1e-12, abs=1e-300)


@given(st.floats(-700, 700))
def test_softplus_stable_and_positive(x):
    y = float(softplus(np.float64(x)))
    assert math.isfinite(y) and y >= 0.0
    ref = math.log1p(math.exp(x)) if x < 30 else x + math.log1p(math.exp(-x))
    assert y == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_softplus_extremes():
    assert softplus(np.array([1000.0]))[0] == 1000.0
    assert softplus(np.array([-1000.0]))[0] == 0.0


def _scalar_splitmix(state: int) -> int:
    mask = (1 << 64) - 1
    z = (state + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def test_splitmix_matches_scalar_reference():
    # first outputs of the reference generator for seed 0 are well known
    assert _scalar_splitmix(0) == 0xE220A8397B1DCDAF
    for seed in (0, 1, 12345, 2**63 + 7):
        assert splitmix64(seed) == _scalar_splitmix(seed)


def test_stream_matches_sequential_reference():
    rng = Rng(42)
    got = rng._u64(5)
    mask = (1 << 64) - 1
    state, ref = 42, []
    for _ in range(5):
        ref.append(_scalar_splitmix(state))
        state = (state + 0x9E3779B97F4A7C15) & mask
    assert [int(v) for v in got] == ref


def test_draws_are_chunking_independent():
    a = Rng(7).normal(10)
    r = Rng(7)
    b = np.concatenate([r.normal(4), r.normal(6)])
    assert np.array_equal(a, b)
    u = Rng(3).uniform(9)
    r = Rng(3)
    assert np.array_equal(u, np.concatenate([r.uniform(2), r.uniform(7)]))


def test_determinism_and_seed_sensitivity():
    assert np.array_equal(Rng(5).normal(100), Rng(5).normal(100))
    assert not np.array_equal(Rng(5).normal(100), Rng(6).normal(100))


def test_uniform_range_and_moments():
    u = Rng(1).uniform(200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1 / 12) < 0.002


def test_normal_monte_carlo_moments():
    z = Rng(2024).normal(200_000)
    se = 1 / math.sqrt(z.size)
    assert abs(z.mean()) < 5 * se
    assert abs(z.std() - 1.0) < 0.01
    # fraction within one sigma, 0.6827 for a standard normal
    assert abs(np.mean(np.abs(z) < 1.0) - 0.682689) < 0.005


def test_derived_streams_independent_and_reproducible():
    root = Rng(99)
    a1, b1 = root.derive("a").normal(50_000), root.derive("b").normal(50_000)
    assert np.array_equal(a1, Rng(99).derive("a").normal(50_000))
    corr = np.corrcoef(a1, b1)[0, 1]
    assert abs(corr) < 0.02
    # deriving does not consume the parent stream
    assert np.array_equal(root.normal(3), Rng(99).normal(3))


def test_integers_range():
    r = Rng(0)
    draws = [r.integers(9) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 8
    assert abs(np.mean(draws) - 4.0) < 0.3


def test_sample_normal_scale_and_errors():
    x = sample_normal(Rng(4), np.zeros(50_000), np.full(50_000, 0.1))
    assert abs(x.std() - 0.1) < 0.003
    assert np.array_equal(sample_normal(Rng(1), [1.0, 2.0], [0.0, 0.0]), [1.0, 2.0])
    with pytest.raises(ValueError):
        sample_normal(Rng(1), [0.0], [-1.0])
    with pytest.raises(ValueError):
        sample_normal(Rng(1), [0.0, 0.0], [1.0])


@settings(max_examples=50)
@given(st.integers(0, 2**64 - 1), st.integers(1, 64))
def test_normal_shape_and_finiteness(seed, n):
    z = Rng(seed).normal((n, 2))
    assert z.shape == (n, 2) and np.all(np.isfinite(z))


def test_as_vector_rejects_matrix():
    with pytest.raises(ValueError):
        numeric.as_vector(np.eye(2))
