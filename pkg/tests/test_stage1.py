"""Backward-link LS estimation: pilots, closed-form error, Monte Carlo checks."""

import numpy as np
import pytest

from twrelay.channel import build_correlations, sample_channels
from twrelay.config import SystemConfig
from twrelay.linalg import RngStream, dft_unitary, sample_complex_gaussian
from twrelay.stage1 import (BackwardEstimate, diagonal_relay_training, ls_estimate,
                            optimal_relay_training, simulate_stage1,
                            stage1_theoretical_mse)


class TestOptimalRelayTraining:
    def test_unit_power_is_bare_dft(self):
        cfg = SystemConfig(nr=4, l_r=4, pr=4.0)
        train = optimal_relay_training(cfg)
        np.testing.assert_allclose(train.x_r, dft_unitary(4), atol=1e-12)

    def test_power_sixteen_scales_by_two(self):
        cfg = SystemConfig(nr=4, l_r=4, pr=16.0)
        train = optimal_relay_training(cfg)
        np.testing.assert_allclose(train.x_r, 2.0 * dft_unitary(4), atol=1e-12)

    def test_padding_columns_zero(self):
        cfg = SystemConfig(n1=2, n2=2, nr=2, l_r=4, l=4)
        train = optimal_relay_training(cfg)
        assert np.all(train.x_r[:, 2:] == 0)

    def test_gram_is_scaled_identity(self):
        cfg = SystemConfig(pr=10.0)
        train = optimal_relay_training(cfg)
        np.testing.assert_allclose(train.gram(), (10.0 / 4.0) * np.eye(4), atol=1e-12)
        assert train.power() == pytest.approx(10.0, abs=1e-9)

    def test_short_pilot_rejected(self):
        with pytest.raises(Exception):
            optimal_relay_training(SystemConfig(nr=4, l_r=3))


class TestDiagonalRelayTraining:
    def test_uniform_loadings_reduce_to_optimal(self):
        cfg = SystemConfig(pr=8.0)
        a = diagonal_relay_training(cfg, np.full(4, 2.0))
        b = optimal_relay_training(cfg)
        np.testing.assert_allclose(a.x_r, b.x_r, atol=1e-12)

    def test_power_identity(self):
        cfg = SystemConfig(pr=5.0)
        train = diagonal_relay_training(cfg, [2.0, 1.5, 1.0, 0.5])
        assert train.power() == pytest.approx(5.0, abs=1e-9)

    def test_negative_loading_rejected(self):
        cfg = SystemConfig(pr=1.0)
        with pytest.raises(ValueError):
            diagonal_relay_training(cfg, [1.5, -0.5, 0.0, 0.0])

    def test_wrong_sum_rejected(self):
        cfg = SystemConfig(pr=1.0)
        with pytest.raises(ValueError):
            diagonal_relay_training(cfg, [0.5, 0.1, 0.1, 0.1])

    def test_single_antenna_loading_makes_singular_gram(self):
        cfg = SystemConfig(pr=4.0)
        train = diagonal_relay_training(cfg, [4.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            stage1_theoretical_mse(cfg, train)


class TestSimulateStage1:
    def test_noiseless_passthrough(self):
        cfg = SystemConfig()
        train = optimal_relay_training(cfg)
        h = sample_complex_gaussian(4, 4, RngStream(1))
        y = simulate_stage1(h, train, 0.0, RngStream(2))
        np.testing.assert_allclose(y, h @ train.x_r, atol=1e-12)

    def test_zero_channel_noise_variance(self):
        cfg = SystemConfig(nr=4, l_r=4)
        train = optimal_relay_training(cfg)
        blocks = [simulate_stage1(np.zeros((4, 4)), train, 2.0, RngStream(3).child(t))
                  for t in range(1563)]  # ~10^5 entries
        power = np.mean([np.mean(np.abs(b) ** 2) for b in blocks])
        assert power == pytest.approx(2.0, rel=0.03)

    def test_linearity_with_frozen_noise(self):
        cfg = SystemConfig()
        train = optimal_relay_training(cfg)
        h1 = sample_complex_gaussian(4, 4, RngStream(4).child(0))
        h2 = sample_complex_gaussian(4, 4, RngStream(4).child(1))
        same_stream = RngStream(4).child(2)
        diff = simulate_stage1(h1 + h2, train, 1.0, same_stream) \
            - simulate_stage1(h1, train, 1.0, same_stream)
        np.testing.assert_allclose(diff, h2 @ train.x_r, atol=1e-10)


class TestLsEstimate:
    def test_noiseless_recovery(self):
        cfg = SystemConfig()
        train = optimal_relay_training(cfg)
        h = sample_complex_gaussian(4, 4, RngStream(5))
        est = ls_estimate(h @ train.x_r, train, 1.0)
        np.testing.assert_allclose(est.h_hat, h, atol=1e-10)
        assert isinstance(est, BackwardEstimate)

    def test_err_var_closed_form(self):
        cfg = SystemConfig(pr=100.0)
        train = optimal_relay_training(cfg)
        est = ls_estimate(np.zeros((4, 4)), train, 0.25)
        assert est.err_var == pytest.approx(0.25 * 4 / 100.0, rel=1e-12)

    def test_total_error_monte_carlo_matches_closed_form(self):
        """Empirical Tr E[dH dH^H] at pr=100, sigma=1 against the 0.64 value."""
        cfg = SystemConfig(pr=100.0)
        train = optimal_relay_training(cfg)
        corr = build_correlations(cfg)
        total = 0.0
        trials = 10_000
        for t in range(trials):
            h = sample_channels(corr, RngStream(6).child(t, 0)).h_1r
            y = simulate_stage1(h, train, 1.0, RngStream(6).child(t, 1))
            est = ls_estimate(y, train, 1.0)
            total += np.linalg.norm(est.h_hat - h) ** 2
        assert total / trials == pytest.approx(0.64, rel=0.05)
        assert stage1_theoretical_mse(cfg, train) == pytest.approx(0.64, rel=1e-12)

    def test_unbiased(self):
        cfg = SystemConfig()
        train = optimal_relay_training(cfg)
        h = sample_complex_gaussian(4, 4, RngStream(7))
        acc = np.zeros((4, 4), dtype=complex)
        trials = 10_000
        for t in range(trials):
            y = simulate_stage1(h, train, 1.0, RngStream(8).child(t))
            acc += ls_estimate(y, train, 1.0).h_hat - h
        assert np.max(np.abs(acc / trials)) < 0.02

    def test_error_channel_orthogonality(self):
        # the LS error is a pure noise functional, independent of the channel
        cfg = SystemConfig()
        train = optimal_relay_training(cfg)
        corr = build_correlations(cfg)
        acc = np.zeros((4, 4), dtype=complex)
        trials = 10_000
        for t in range(trials):
            h = sample_channels(corr, RngStream(9).child(t, 0)).h_1r
            y = simulate_stage1(h, train, 1.0, RngStream(9).child(t, 1))
            acc += (ls_estimate(y, train, 1.0).h_hat - h) @ h.conj().T
        assert np.max(np.abs(acc / trials)) < 0.03

    def test_error_covariance_is_white(self):
        from twrelay.linalg import vec

        cfg = SystemConfig(pr=10.0)
        train = optimal_relay_training(cfg)
        trials = 20_000
        samples = np.stack([
            vec(ls_estimate(simulate_stage1(np.zeros((4, 4)), train, 1.0,
                                            RngStream(10).child(t)),
                            train, 1.0).h_hat)
            for t in range(trials)])
        cov = samples.T @ samples.conj() / trials
        scale = 1.0 * 4 / 10.0  # sigma^2 * nr / pr
        assert np.linalg.norm(cov - scale * np.eye(16)) / np.linalg.norm(
            scale * np.eye(16)) < 0.05


class TestTheoreticalMse:
    def test_closed_form_value(self):
        cfg = SystemConfig(pr=100.0)
        assert stage1_theoretical_mse(cfg, optimal_relay_training(cfg)) \
            == pytest.approx(1.0 * 4 * 16 / 100.0, rel=1e-12)

    def test_zero_noise_gives_zero(self):
        cfg = SystemConfig(sigma1_sq=0.0, pr=10.0)
        assert stage1_theoretical_mse(cfg, optimal_relay_training(cfg)) == 0.0

    def test_doubling_power_halves_it(self):
        lo = SystemConfig(pr=7.0)
        hi = SystemConfig(pr=14.0)
        ratio = stage1_theoretical_mse(lo, optimal_relay_training(lo)) \
            / stage1_theoretical_mse(hi, optimal_relay_training(hi))
        assert ratio == pytest.approx(2.0, rel=1e-12)

    def test_optimal_pilot_beats_random_feasible_pilots(self):
        """Among equal-power pilots the scaled-unitary one minimizes the MSE."""
        cfg = SystemConfig(pr=4.0)
        best = stage1_theoretical_mse(cfg, optimal_relay_training(cfg))
        rng = np.random.default_rng(13)
        for _ in range(100):
            x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            x *= np.sqrt(cfg.pr / np.real(np.trace(x @ x.conj().T)))
            from twrelay.stage1 import RelayTraining

            other = stage1_theoretical_mse(cfg, RelayTraining(x_r=x, scheme="diagonal"))
            assert other >= best * (1 - 1e-9)

    def test_random_loadings_beaten_by_optimal_in_monte_carlo(self):
        cfg = SystemConfig(pr=4.0)
        corr = build_correlations(cfg)
        opt = optimal_relay_training(cfg)
        rng = np.random.default_rng(14)
        diag = diagonal_relay_training(cfg, cfg.pr * rng.dirichlet(np.ones(4)))
        err_opt = 0.0
        err_diag = 0.0
        trials = 10_000
        for t in range(trials):
            h = sample_channels(corr, RngStream(15).child(t, 0)).h_1r
            noise_stream = RngStream(15).child(t, 1)
            for train, acc in ((opt, "o"), (diag, "d")):
                y = simulate_stage1(h, train, 1.0, noise_stream)
                err = np.linalg.norm(ls_estimate(y, train, 1.0).h_hat - h) ** 2
                if acc == "o":
                    err_opt += err
                else:
                    err_diag += err
        assert err_diag > err_opt
