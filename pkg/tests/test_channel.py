"""Correlation construction and Kronecker channel sampling."""

import numpy as np
import pytest

from twrelay.channel import (CorrelationSet, build_correlations, correlation_matrix,
                             forward_prior_covariance, sample_channels)
from twrelay.config import SystemConfig, apply_scenario
from twrelay.linalg import RngStream, kron, vec

J0_AT_TENTH_PI = 0.9754777740752495
J0_AT_HALF_PI = 0.4720012157682347


def identity_correlations(n1=2, n2=2, nr=2):
    return CorrelationSet(
        psi_1r=np.eye(n1), phi_1r=np.eye(nr),
        psi_2r=np.eye(n2), phi_2r=np.eye(nr),
        psi_r1=np.eye(nr), phi_r1=np.eye(n1),
        psi_r2=np.eye(nr), phi_r2=np.eye(n2))


class TestCorrelationMatrix:
    def test_zero_spacing_gives_all_ones(self):
        np.testing.assert_allclose(correlation_matrix(5, 0.0), np.ones((5, 5)))

    def test_unit_diagonal_exact(self):
        a = correlation_matrix(6, 0.17)
        assert np.array_equal(np.diag(a), np.ones(6))

    def test_first_offdiagonal_values(self):
        strong = correlation_matrix(4, 0.05)
        weak = correlation_matrix(4, 0.25)
        assert strong[0, 1] == pytest.approx(J0_AT_TENTH_PI, abs=1e-10)
        assert weak[0, 1] == pytest.approx(J0_AT_HALF_PI, abs=1e-10)

    def test_symmetric_toeplitz(self):
        a = correlation_matrix(5, 0.3)
        np.testing.assert_allclose(a, a.T)
        for d in range(5):
            diag = np.diagonal(a, offset=d)
            assert np.all(diag == diag[0])

    def test_psd_up_to_roundoff(self):
        for spacing in (0.05, 0.25, 0.5, 1.0):
            vals = np.linalg.eigvalsh(correlation_matrix(8, spacing))
            assert vals.min() >= -1e-10

    def test_offdiagonals_below_one_for_positive_spacing(self):
        a = correlation_matrix(6, 0.4)
        off = a[~np.eye(6, dtype=bool)]
        assert np.all(np.abs(off) < 1.0)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            correlation_matrix(0, 0.1)
        with pytest.raises(ValueError):
            correlation_matrix(4, -0.1)


class TestBuildCorrelations:
    def test_scenario_spacing_assignment(self):
        cfg = apply_scenario(SystemConfig(), "s1_weak")
        corr = build_correlations(cfg)
        # source-1 side carries the weak 0.25 spacing, source 2 the strong 0.05
        assert corr.psi_1r[0, 1] == pytest.approx(J0_AT_HALF_PI, abs=1e-10)
        assert corr.phi_r1[0, 1] == pytest.approx(J0_AT_HALF_PI, abs=1e-10)
        assert corr.psi_2r[0, 1] == pytest.approx(J0_AT_TENTH_PI, abs=1e-10)
        assert corr.phi_r2[0, 1] == pytest.approx(J0_AT_TENTH_PI, abs=1e-10)
        # relay-side arrays always use the relay spacing
        for relay_side in (corr.phi_1r, corr.phi_2r, corr.psi_r1, corr.psi_r2):
            assert relay_side[0, 1] == pytest.approx(J0_AT_HALF_PI, abs=1e-10)

    def test_dims_follow_config(self):
        cfg = SystemConfig(n1=2, n2=3, nr=5, l_r=5, l=6)
        corr = build_correlations(cfg)
        assert corr.psi_1r.shape == (2, 2)
        assert corr.psi_2r.shape == (3, 3)
        assert corr.phi_1r.shape == (5, 5)
        assert corr.phi_r1.shape == (2, 2)


class TestSampleChannels:
    def test_deterministic(self):
        corr = build_correlations(SystemConfig())
        a = sample_channels(corr, RngStream(0).child(0, 0, 0))
        b = sample_channels(corr, RngStream(0).child(0, 0, 0))
        assert np.array_equal(a.h_1r, b.h_1r)
        assert np.array_equal(a.h_r2, b.h_r2)

    def test_identity_correlations_pass_core_through(self):
        from twrelay.linalg import sample_complex_gaussian

        corr = identity_correlations()
        ch = sample_channels(corr, RngStream(5))
        core = sample_complex_gaussian(2, 2, RngStream(5).child(0))
        np.testing.assert_allclose(ch.h_1r, core, atol=1e-12)

    def test_mean_squared_norm_is_antenna_product(self):
        # E||H||_F^2 = Tr(Psi) Tr(Phi) = nr * n_i for unit-diagonal correlations
        cfg = apply_scenario(SystemConfig(), "all_strong")
        corr = build_correlations(cfg)
        norms = [np.linalg.norm(sample_channels(corr, RngStream(21).child(t)).h_r1) ** 2
                 for t in range(10_000)]
        assert np.mean(norms) == pytest.approx(16.0, rel=0.03)

    def test_entrywise_mean_near_zero(self):
        corr = build_correlations(SystemConfig(n1=2, n2=2, nr=2, l_r=2, l=4))
        acc = np.zeros((2, 2), dtype=complex)
        trials = 25_000  # 10^5 entries in total
        for t in range(trials):
            acc += sample_channels(corr, RngStream(22).child(t)).h_1r
        assert np.max(np.abs(acc / trials)) < 0.02

    def test_empirical_vec_covariance_matches_kronecker(self):
        cfg = SystemConfig(n1=2, n2=2, nr=3, l_r=3, l=4, spacing_s1=0.1,
                           spacing_s2=0.3, spacing_r=0.2)
        corr = build_correlations(cfg)
        want = kron(corr.phi_r1.T, corr.psi_r1)
        samples = np.stack([vec(sample_channels(corr, RngStream(23).child(t)).h_r1)
                            for t in range(100_000)])
        got = samples.T @ samples.conj() / len(samples)
        err = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert err < 0.02


class TestForwardPriorCovariance:
    def test_identity_correlations(self):
        corr = identity_correlations()
        np.testing.assert_allclose(forward_prior_covariance(corr), np.eye(8))

    def test_blocks_exact_and_cross_zero(self):
        cfg = apply_scenario(SystemConfig(n1=2, n2=3, nr=2, l_r=2, l=5), "s1_weak")
        corr = build_correlations(cfg)
        r = forward_prior_covariance(corr)
        d1 = 2 * 2
        assert np.array_equal(r[:d1, :d1], kron(corr.phi_r1.T, corr.psi_r1))
        assert np.array_equal(r[d1:, d1:], kron(corr.phi_r2.T, corr.psi_r2))
        assert np.all(r[:d1, d1:] == 0)
        assert np.all(r[d1:, :d1] == 0)

    def test_matches_empirical_stacked_covariance(self):
        cfg = SystemConfig(n1=2, n2=2, nr=2, l_r=2, l=4, spacing_s1=0.15,
                           spacing_s2=0.35, spacing_r=0.25)
        corr = build_correlations(cfg)
        want = forward_prior_covariance(corr)
        samples = []
        for t in range(100_000):
            ch = sample_channels(corr, RngStream(24).child(t))
            samples.append(np.concatenate([vec(ch.h_r1), vec(ch.h_r2)]))
        samples = np.stack(samples)
        got = samples.T @ samples.conj() / len(samples)
        err = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert err < 0.02
