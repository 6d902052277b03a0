"""Stage 2: LMMSE estimation of both forward (source-to-relay) links.

Both sources transmit pilots simultaneously; the relay forwards its received
block unamplified, so source i observes

    Y_i = H_ir (H_r1 X_1 + H_r2 X_2 + V_r) + V_i.

Replacing H_ir by its stage-1 estimate and vectorizing gives the linear model
y_i = (P^T kron H_hat) h_c + v_eff, where h_c stacks vec(H_r1) and vec(H_r2)
and v_eff collects relay noise, receiver noise and the stage-1 error leakage.
The LMMSE estimator conditions on H_hat and uses the exact covariance of
v_eff under the white stage-1 error model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, CorrelationSet, forward_prior_covariance
from .config import SystemConfig
from .linalg import RngStream, kron, sample_complex_gaussian, vec

logger = logging.getLogger(__name__)

COVARIANCE_CONDITION_LIMIT = 1e12
COVARIANCE_RIDGE = 1e-12


@dataclass(frozen=True)
class SourceTraining:
    """Source pilot blocks x1 (n1 x l) and x2 (n2 x l) plus the scheme label."""

    x1: np.ndarray
    x2: np.ndarray
    scheme: str

    def pilot(self, node: int) -> np.ndarray:
        return self.x1 if node == 1 else self.x2

    def power(self, node: int) -> float:
        x = self.pilot(node)
        return float(np.real(np.trace(x @ x.conj().T)))


@dataclass(frozen=True)
class ForwardEstimate:
    """LMMSE estimate of the stacked forward vector with its MSE values.

    mse_exact is the error trace from the estimator's defining covariances,
    mse_woodbury the algebraically equivalent compact inverse form, and
    mse_approx the value obtained when the pilot-dependent leakage term of
    the effective noise is dropped (a strict lower bound).
    """

    h_c_hat: np.ndarray
    mse_exact: float
    mse_woodbury: float
    mse_approx: float


def stacked_pilots(train: SourceTraining) -> np.ndarray:
    return np.vstack([train.x1, train.x2])


def observation_operator(p, h_hat) -> np.ndarray:
    """Linear map from the stacked forward vector to the stacked observation.

    For Y = H_hat Hc P the vectorized model is vec(Y) = (P^T kron H_hat) hc,
    so the operator is (l * n_i) x ((n1 + n2) * nr).
    """
    return kron(np.asarray(p).T, np.asarray(h_hat))


def simulate_stage2(channels: ChannelSet, train: SourceTraining, cfg: SystemConfig,
                    stream: RngStream):
    """One stage-2 transmission; returns (y_r, y_1, y_2).

    The relay observation y_r carries fresh relay noise and is forwarded to
    both sources, each of which adds its own receiver noise.  Noise draws
    come from fixed child substreams, so the same stream reproduces the same
    noise regardless of the pilots used.
    """
    l = train.x1.shape[1]
    v_r = np.sqrt(cfg.sigmar_sq) * sample_complex_gaussian(cfg.nr, l, stream.child(0))
    y_r = channels.h_r1 @ train.x1 + channels.h_r2 @ train.x2 + v_r
    v_1 = np.sqrt(cfg.sigma1_sq) * sample_complex_gaussian(cfg.n1, l, stream.child(1))
    v_2 = np.sqrt(cfg.sigma2_sq) * sample_complex_gaussian(cfg.n2, l, stream.child(2))
    y_1 = channels.h_1r @ y_r + v_1
    y_2 = channels.h_2r @ y_r + v_2
    return y_r, y_1, y_2


def backward_error_var(cfg: SystemConfig, node: int) -> float:
    """Per-entry variance of the stage-1 error under the optimal relay pilot."""
    return cfg.noise_var(node) * cfg.nr / cfg.pr


def effective_noise_var(cfg: SystemConfig, node: int) -> float:
    """White part of the effective stage-2 noise at one source.

    Receiver noise plus the relay-noise power leaked through the stage-1
    error: sigma_i^2 + sigma_i^2 * sigmar^2 * nr^2 / pr.
    """
    return cfg.noise_var(node) * (1.0 + cfg.sigmar_sq * cfg.nr ** 2 / cfg.pr)


def noise_covariance(h_hat, train: SourceTraining, corr: CorrelationSet,
                     cfg: SystemConfig, node: int = 1) -> np.ndarray:
    """Covariance of the effective stage-2 noise, conditioned on H_hat.

    Three contributions: relay noise forwarded through H_hat, the white part
    (receiver noise plus the relay-noise/stage-1-error cross term), and the
    pilot-dependent leakage of the stage-1 error acting on the unknown
    forward channels.  The leakage coefficient for user k is
    Tr(psi_rk) * sigma_i^2 * nr / pr.
    """
    h_hat = np.asarray(h_hat)
    n_i = h_hat.shape[0]
    l = train.x1.shape[1]
    err_var = backward_error_var(cfg, node)
    cov = cfg.sigmar_sq * kron(np.eye(l), h_hat @ h_hat.conj().T)
    cov += effective_noise_var(cfg, node) * np.eye(n_i * l)
    for k in (1, 2):
        x_k = train.pilot(k)
        psi = corr.forward_rx(k)
        phi = corr.forward_tx(k)
        coeff = float(np.real(np.trace(psi))) * err_var
        cov += coeff * kron(x_k.T @ phi.T @ x_k.conj(), np.eye(n_i))
    return cov


def noise_floor_covariance(h_hat, l: int, cfg: SystemConfig, node: int = 1) -> np.ndarray:
    """High-relay-power limit of the effective noise covariance.

    Drops every 1/pr contribution of the exact covariance: the pilot
    leakage term and the relay-power part of the white level, leaving
    sigmar^2 I kron H_hat H_hat^H + sigma_i^2 I.
    """
    h_hat = np.asarray(h_hat)
    n_i = h_hat.shape[0]
    return (cfg.sigmar_sq * kron(np.eye(l), h_hat @ h_hat.conj().T)
            + cfg.noise_var(node) * np.eye(n_i * l))


def _trace_inverse_sum(r_hc, m, r_noise) -> float:
    """Tr((R_hc^{-1} + M^H R_noise^{-1} M)^{-1}) with basic conditioning checks."""
    r_hc = np.asarray(r_hc)
    if np.linalg.cond(r_hc) > COVARIANCE_CONDITION_LIMIT:
        raise ValueError("prior covariance is singular or near-singular")
    info = np.linalg.inv(r_hc) + m.conj().T @ np.linalg.solve(r_noise, m)
    return float(np.real(np.trace(np.linalg.inv(info))))


def conditional_mse(h_hat, train: SourceTraining, r_hc, r_vi) -> float:
    """Estimation MSE given H_hat, in the compact inverse form."""
    m = observation_operator(stacked_pilots(train), h_hat)
    return _trace_inverse_sum(r_hc, m, r_vi)


def approx_mse(h_hat, train: SourceTraining, corr: CorrelationSet,
               cfg: SystemConfig, node: int = 1) -> float:
    """Conditional MSE with the pilot-dependent leakage term dropped.

    Strictly below the exact conditional MSE whenever the dropped term is
    nonzero; the gap closes at rate 1/pr.
    """
    l = train.x1.shape[1]
    m = observation_operator(stacked_pilots(train), h_hat)
    r_hc = forward_prior_covariance(corr)
    r_bar = noise_floor_covariance(h_hat, l, cfg, node)
    return _trace_inverse_sum(r_hc, m, r_bar)


def approx_mse_blockform(h_hat, train: SourceTraining, corr: CorrelationSet,
                         cfg: SystemConfig, node: int = 1) -> float:
    """Same quantity as approx_mse, assembled from per-user Gram blocks.

    The information matrix decouples into (X_p^* X_q^T) kron K blocks with a
    shared relay kernel K = H^H (sigmar^2 H H^H + sigma_i^2 I)^{-1} H.
    Serves as an independent algebraic path.
    """
    h_hat = np.asarray(h_hat)
    hh = h_hat @ h_hat.conj().T
    nu = cfg.noise_var(node)
    kernel = h_hat.conj().T @ np.linalg.solve(
        cfg.sigmar_sq * hh + nu * np.eye(hh.shape[0]), h_hat)
    pilots = (train.x1, train.x2)
    priors = (kron(corr.phi_r1.T, corr.psi_r1), kron(corr.phi_r2.T, corr.psi_r2))
    sizes = [p.shape[0] * corr.psi_r1.shape[0] for p in pilots]
    total = sum(sizes)
    info = np.zeros((total, total), dtype=complex)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for p_idx in range(2):
        for q_idx in range(2):
            gram = pilots[p_idx].conj() @ pilots[q_idx].T
            block = kron(gram, kernel)
            info[offsets[p_idx]:offsets[p_idx + 1], offsets[q_idx]:offsets[q_idx + 1]] += block
    for k_idx in range(2):
        sl = slice(offsets[k_idx], offsets[k_idx + 1])
        info[sl, sl] += np.linalg.inv(priors[k_idx])
    return float(np.real(np.trace(np.linalg.inv(info))))


def backward_link_gain(h_hat, noise_var: float) -> np.ndarray:
    """Information kernel of the relay hop, H^H (noise_var I + H H^H)^{-1} H.

    PSD with all eigenvalues strictly below 1; quantifies how much of the
    forward-channel information survives the noisy backward hop.
    """
    h_hat = np.asarray(h_hat)
    hh = h_hat @ h_hat.conj().T
    return h_hat.conj().T @ np.linalg.solve(noise_var * np.eye(hh.shape[0]) + hh, h_hat)


def lmmse_estimate(y_i, h_hat, train: SourceTraining, r_hc, r_vi,
                   cfg: SystemConfig, node: int = 1) -> ForwardEstimate:
    """LMMSE estimate of the stacked forward vector from one source's block.

    Populates the exact MSE (defining form), its compact equivalent and the
    leakage-free approximation.
    """
    y = vec(np.asarray(y_i))
    m = observation_operator(stacked_pilots(train), h_hat)
    r_hc = np.asarray(r_hc)
    r_y = m @ r_hc @ m.conj().T + r_vi
    if np.linalg.cond(r_y) > COVARIANCE_CONDITION_LIMIT:
        logger.warning("observation covariance ill-conditioned; adding ridge %g",
                       COVARIANCE_RIDGE)
        r_y = r_y + COVARIANCE_RIDGE * np.eye(r_y.shape[0])
    cross = r_hc @ m.conj().T
    gain = np.linalg.solve(r_y.conj().T, cross.conj().T).conj().T
    h_c_hat = gain @ y
    mse_exact = float(np.real(np.trace(r_hc - gain @ cross.conj().T)))
    mse_wood = conditional_mse(h_hat, train, r_hc, r_vi)
    r_bar = noise_floor_covariance(h_hat, train.x1.shape[1], cfg, node)
    mse_approx = _trace_inverse_sum(r_hc, m, r_bar)
    return ForwardEstimate(h_c_hat=h_c_hat, mse_exact=mse_exact,
                           mse_woodbury=mse_wood, mse_approx=mse_approx)
