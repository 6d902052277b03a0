"""Numerics layer: DFT bases, Bessel values, eigensolves, seeded streams.

The two Bessel constants are frozen from an independent power-series
evaluation (40 terms, exact factorials) rather than from scipy itself.
"""

import math

import numpy as np
import pytest

from twrelay.linalg import (EigenData, RngStream, bessel_j0, dft_unitary, eigh,
                            hermitian_sqrt, kron, sample_complex_gaussian, unvec, vec)

# power-series J0 at the two antenna-spacing arguments used by the scenarios
J0_AT_TENTH_PI = 0.9754777740752495
J0_AT_HALF_PI = 0.4720012157682347


def series_j0(x, terms=40):
    """Independent ascending-series J0 for cross-checking scipy."""
    total = 0.0
    for m in range(terms):
        total += (-1) ** m * (x / 2.0) ** (2 * m) / math.factorial(m) ** 2
    return total


def test_dft_unitary_n1():
    np.testing.assert_allclose(dft_unitary(1), [[1.0]], atol=1e-15)


def test_dft_unitary_n2_known_matrix():
    want = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    np.testing.assert_allclose(dft_unitary(2), want, atol=1e-12)


@pytest.mark.parametrize("n", range(1, 17))
def test_dft_unitary_is_unitary(n):
    u = dft_unitary(n)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(n), atol=1e-12)


def test_dft_unitary_rejects_zero():
    with pytest.raises(ValueError):
        dft_unitary(0)


def test_bessel_j0_at_zero():
    assert bessel_j0(0.0) == pytest.approx(1.0, abs=1e-14)


def test_bessel_j0_frozen_constants():
    assert bessel_j0(2 * np.pi * 0.05) == pytest.approx(J0_AT_TENTH_PI, abs=1e-10)
    assert bessel_j0(2 * np.pi * 0.25) == pytest.approx(J0_AT_HALF_PI, abs=1e-10)


def test_bessel_j0_matches_series_on_grid():
    for x in np.linspace(0.0, 10.0, 41):
        assert bessel_j0(x) == pytest.approx(series_j0(x), abs=1e-10)


def test_bessel_j0_rejects_nan():
    with pytest.raises(ValueError):
        bessel_j0(np.nan)


def test_vec_unvec_roundtrip():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    assert np.array_equal(unvec(vec(a), 3), a)


def test_vec_is_column_major():
    a = np.array([[1, 2], [3, 4]])
    assert np.array_equal(vec(a), [1, 3, 2, 4])


def test_unvec_rejects_bad_length():
    with pytest.raises(ValueError):
        unvec(np.arange(7), 3)


def test_kron_associative():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b, c = (rng.standard_normal((2, 2)) for _ in range(3))
        left = kron(kron(a, b), c)
        right = kron(a, kron(b, c))
        np.testing.assert_allclose(left, right, atol=1e-12)


class TestEigh:
    def test_identity(self):
        out = eigh(np.eye(4))
        np.testing.assert_allclose(out.values, np.ones(4))
        np.testing.assert_allclose(out.basis @ out.basis.conj().T, np.eye(4), atol=1e-12)

    def test_descending_order_of_diagonal(self):
        out = eigh(np.diag([1.0, 3.0, 2.0]))
        np.testing.assert_allclose(out.values, [3.0, 2.0, 1.0])

    def test_reconstruction_toeplitz(self):
        from twrelay.channel import correlation_matrix

        a = correlation_matrix(4, 0.25)
        out = eigh(a)
        recon = (out.basis * out.values) @ out.basis.conj().T
        np.testing.assert_allclose(recon, a, atol=1e-10)

    def test_deterministic_for_degenerate_input(self):
        first = eigh(np.eye(3))
        second = eigh(np.eye(3))
        assert np.array_equal(first.basis, second.basis)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_returns_eigendata(self):
        assert isinstance(eigh(np.eye(2)), EigenData)


class TestHermitianSqrt:
    def test_identity(self):
        np.testing.assert_allclose(hermitian_sqrt(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal(self):
        np.testing.assert_allclose(hermitian_sqrt(np.diag([4.0, 9.0])),
                                   np.diag([2.0, 3.0]), atol=1e-12)

    def test_square_recovers_input(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a = m.conj().T @ m
        s = hermitian_sqrt(a)
        np.testing.assert_allclose(s @ s, a, atol=1e-10 * np.linalg.norm(a))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            hermitian_sqrt(np.diag([1.0, -0.5]))

    def test_clamps_roundoff_negatives(self):
        a = np.diag([1.0, -1e-9])
        s = hermitian_sqrt(a)
        assert s[1, 1] == 0.0


class TestRandomStreams:
    def test_same_stream_same_draws(self):
        a = sample_complex_gaussian(4, 6, RngStream(7).child(1, 2))
        b = sample_complex_gaussian(4, 6, RngStream(7).child(1, 2))
        assert np.array_equal(a, b)

    def test_different_children_differ(self):
        a = sample_complex_gaussian(4, 6, RngStream(7).child(1))
        b = sample_complex_gaussian(4, 6, RngStream(7).child(2))
        assert not np.allclose(a, b)

    def test_child_extends_path(self):
        s = RngStream(3).child(1).child(4, 5)
        assert s.seed == 3
        assert s.path == (1, 4, 5)

    def test_unit_variance_and_zero_mean(self):
        # 10^5 entries; 0.02 is a little over 3 sigma for both statistics
        z = sample_complex_gaussian(400, 250, RngStream(11))
        assert abs(z.mean()) < 0.02
        assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_real_imag_split_is_half_half(self):
        z = sample_complex_gaussian(400, 250, RngStream(12))
        assert np.var(z.real) == pytest.approx(0.5, abs=0.02)
        assert np.var(z.imag) == pytest.approx(0.5, abs=0.02)
