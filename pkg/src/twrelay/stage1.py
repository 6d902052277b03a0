"""Stage 1: least-squares estimation of the backward (relay-to-source) links.

The relay broadcasts a pilot block X_R; each source observes
Y_i = H_ir X_R + V_i and forms the LS estimate
H_hat = Y X^H (X X^H)^{-1}.  With the power-normalized unitary pilot the
estimation error is white with per-entry variance sigma_i^2 * nr / pr.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .linalg import RngStream, dft_unitary, sample_complex_gaussian

GRAM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class RelayTraining:
    """Relay pilot block x_r of shape (nr, l_r) plus its scheme label."""

    x_r: np.ndarray
    scheme: str

    def gram(self) -> np.ndarray:
        return self.x_r @ self.x_r.conj().T

    def power(self) -> float:
        return float(np.real(np.trace(self.gram())))


@dataclass(frozen=True)
class BackwardEstimate:
    """LS estimate of one backward link with its error scale.

    err_var is the average per-entry error variance,
    sigma_i^2 * Tr((X X^H)^{-1}) / nr, which reduces to sigma_i^2 * nr / pr
    for the optimal pilot (where the error is exactly white).
    """

    h_hat: np.ndarray
    err_var: float


def _padded_unitary(nr: int, l_r: int) -> np.ndarray:
    """nr x l_r block [U, 0] whose rows are orthonormal."""
    if l_r < nr:
        raise ValueError(f"pilot length l_r={l_r} shorter than nr={nr}")
    xi = np.zeros((nr, l_r), dtype=complex)
    xi[:, :nr] = dft_unitary(nr)
    return xi


def optimal_relay_training(cfg: SystemConfig) -> RelayTraining:
    """Minimum-MSE relay pilot: scaled row-orthonormal block sqrt(pr/nr)*[U, 0]."""
    xi = _padded_unitary(cfg.nr, cfg.l_r)
    return RelayTraining(x_r=np.sqrt(cfg.pr / cfg.nr) * xi, scheme="optimal")


def diagonal_relay_training(cfg: SystemConfig, loadings) -> RelayTraining:
    """Baseline relay pilot with per-antenna power loadings.

    The loadings are powers summing to pr; the pilot applies their square
    roots to the rows of the padded unitary block.
    """
    loadings = np.asarray(loadings, dtype=float)
    if loadings.shape != (cfg.nr,):
        raise ValueError(f"need {cfg.nr} loadings, got shape {loadings.shape}")
    if np.any(loadings < 0):
        raise ValueError("loadings must be nonnegative")
    total = float(loadings.sum())
    if abs(total - cfg.pr) > 1e-9 * max(1.0, cfg.pr):
        raise ValueError(f"loadings sum {total!r} does not match pr={cfg.pr!r}")
    xi = _padded_unitary(cfg.nr, cfg.l_r)
    return RelayTraining(x_r=np.sqrt(loadings)[:, None] * xi, scheme="diagonal")


def simulate_stage1(h_ir, train: RelayTraining, sigma_i_sq: float, stream: RngStream):
    """Received pilot block Y_i = H_ir X_R + V_i at one source node."""
    h_ir = np.asarray(h_ir)
    noise = np.sqrt(sigma_i_sq) * sample_complex_gaussian(h_ir.shape[0], train.x_r.shape[1], stream)
    return h_ir @ train.x_r + noise


def _gram_inverse(train: RelayTraining) -> np.ndarray:
    gram = train.gram()
    if np.linalg.cond(gram) > GRAM_CONDITION_LIMIT:
        raise ValueError("relay pilot Gram matrix is singular or near-singular")
    return np.linalg.inv(gram)


def ls_estimate(y_tilde, train: RelayTraining, sigma_i_sq: float) -> BackwardEstimate:
    """Least-squares backward estimate from the stage-1 observation."""
    y_tilde = np.asarray(y_tilde)
    gram_inv = _gram_inverse(train)
    h_hat = y_tilde @ train.x_r.conj().T @ gram_inv
    nr = train.x_r.shape[0]
    err_var = sigma_i_sq * float(np.real(np.trace(gram_inv))) / nr
    return BackwardEstimate(h_hat=h_hat, err_var=err_var)


def stage1_theoretical_mse(cfg: SystemConfig, train: RelayTraining, node: int = 1) -> float:
    """Total LS error power E||H_hat - H||_F^2 = sigma_i^2 * n_i * Tr((X X^H)^{-1})."""
    gram_inv = _gram_inverse(train)
    return cfg.noise_var(node) * cfg.antennas(node) * float(np.real(np.trace(gram_inv)))
