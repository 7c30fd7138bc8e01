import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from autosecagg.errors import DimensionError
from autosecagg.hadamard import (
    RotationConfig,
    fwht,
    inverse_rotate,
    next_power_of_two,
    rotate,
    rotate_many,
    sample_rademacher,
)


def naive_h(n):
    # independent oracle: scipy's Sylvester construction
    return scipy.linalg.hadamard(n) / np.sqrt(n)


def test_fwht_trivial():
    np.testing.assert_allclose(fwht([1.0]), [1.0])
    np.testing.assert_allclose(fwht([1.0, 1.0]), [np.sqrt(2), 0.0], atol=1e-15)
    a, b = 0.3, -1.7
    np.testing.assert_allclose(fwht([a, b]), [(a + b) / np.sqrt(2), (a - b) / np.sqrt(2)])


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_fwht_matches_naive_matrix(gen, n):
    v = gen.normal(size=n)
    np.testing.assert_allclose(fwht(v), naive_h(n) @ v, rtol=0, atol=1e-12)


def test_fwht_does_not_modify_input(gen):
    v = gen.normal(size=8)
    keep = v.copy()
    fwht(v)
    np.testing.assert_array_equal(v, keep)


@pytest.mark.parametrize("n", [3, 6, 0])
def test_fwht_rejects_non_power_of_two(n):
    with pytest.raises(DimensionError):
        fwht(np.ones(n))


@given(st.integers(0, 14), st.integers(0, 2**32 - 1))
def test_fwht_involution(log_n, seed):
    v = np.random.default_rng(seed).normal(size=2**log_n)
    np.testing.assert_allclose(fwht(fwht(v)), v, rtol=0, atol=1e-10)


def test_next_power_of_two():
    assert [next_power_of_two(n) for n in (1, 2, 3, 7, 8, 1000)] == [1, 2, 4, 8, 8, 1024]


def test_rotation_config_padding():
    c = RotationConfig(1, 1000)
    assert c.padded_dim == 1024
    with pytest.raises(DimensionError):
        RotationConfig(1, 10, padded_dim=8)
    with pytest.raises(DimensionError):
        RotationConfig(1, 10, padded_dim=24)


def test_rademacher_deterministic_and_signed():
    a = sample_rademacher(99, 4)
    np.testing.assert_array_equal(a, sample_rademacher(99, 4))
    big = sample_rademacher(5, 4096)
    assert set(np.unique(big)) == {-1.0, 1.0}


def test_rademacher_mean_over_seeds():
    d = 2**16
    means = np.array([abs(sample_rademacher(s, d).mean()) for s in range(1000)])
    assert np.mean(means < 0.02) >= 0.99
    assert np.all(means < 4 / np.sqrt(d))


def test_rotate_zero_and_naive_oracle(gen):
    c = RotationConfig(11, 3)
    assert c.padded_dim == 4
    np.testing.assert_array_equal(rotate(np.zeros(3), c), np.zeros(4))
    x = gen.normal(size=3)
    d_diag = np.diag(sample_rademacher(11, 4))
    expected = naive_h(4) @ d_diag @ np.append(x, 0.0)
    np.testing.assert_allclose(rotate(x, c), expected, atol=1e-12)


def test_inverse_rotate_naive_oracle(gen):
    c = RotationConfig(5, 8)
    z = gen.normal(size=8)
    d_diag = np.diag(sample_rademacher(5, 8))
    np.testing.assert_allclose(inverse_rotate(z, c), d_diag @ naive_h(8) @ z, atol=1e-12)
    np.testing.assert_array_equal(inverse_rotate(np.zeros(8), c), np.zeros(8))


def test_dense_matrix_is_orthonormal():
    m = RotationConfig(3, 16).matrix()
    np.testing.assert_allclose(m @ m.T, np.eye(16), atol=1e-12)


def test_length_mismatch_raises():
    c = RotationConfig(0, 5)
    with pytest.raises(DimensionError):
        rotate(np.ones(4), c)
    with pytest.raises(DimensionError):
        inverse_rotate(np.ones(5), c)


@given(
    st.sampled_from([1, 7, 64, 1000, 4096]),
    st.integers(0, 2**63 - 1),
    st.floats(1e-6, 1e6),
)
def test_norm_preservation_and_roundtrip(d, seed, scale):
    x = np.random.default_rng(seed % 2**32).normal(size=d) * scale
    c = RotationConfig(seed, d)
    z = rotate(x, c)
    assert abs(np.linalg.norm(z) - np.linalg.norm(x)) <= 1e-10 * np.linalg.norm(x)
    np.testing.assert_allclose(inverse_rotate(z, c), x, rtol=0, atol=1e-10 * max(1.0, scale))


def test_rotate_many_matches_rotate(gen):
    c = RotationConfig(8, 10)
    xs = gen.normal(size=(3, 10))
    out = rotate_many(xs, c)
    for row, x in zip(out, xs):
        np.testing.assert_allclose(row, rotate(x, c), atol=1e-14)


def test_sub_gaussian_tail():
    d = 2**14
    x = np.random.default_rng(0).normal(size=d)
    x /= np.linalg.norm(x)
    sigma = 1 / np.sqrt(d)
    for seed in range(20):
        y = rotate(x, RotationConfig(seed, d))
        for tau in (2 * sigma, 3 * sigma):
            frac = np.mean(np.abs(y) > tau)
            assert frac <= 2 * np.exp(-d * tau**2 / 2) + 3 / np.sqrt(d)
