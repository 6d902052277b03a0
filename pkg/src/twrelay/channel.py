"""Kronecker-correlated Rayleigh channel model for the two-way relay link.

Each link H is built as Psi^(1/2) @ G @ Phi^(1/2), with G iid complex
Gaussian, Psi the receive-side and Phi the transmit-side correlation.  The
correlation entries follow the zero-order Bessel profile of a uniform linear
array under isotropic scattering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .config import SystemConfig
from .linalg import RngStream, bessel_j0, hermitian_sqrt, kron, sample_complex_gaussian


def correlation_matrix(n: int, spacing: float) -> np.ndarray:
    """Antenna correlation matrix for an n-element uniform linear array.

    Entry (p, q) is J0(2*pi*spacing*|p - q|) with the spacing given in
    wavelengths.  The result is a real symmetric PSD Toeplitz matrix with
    unit diagonal; spacing 0 collapses to the all-ones matrix.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if spacing < 0:
        raise ValueError(f"spacing must be nonnegative, got {spacing}")
    first = bessel_j0(2.0 * np.pi * spacing * np.arange(n))
    return toeplitz(first)


@dataclass(frozen=True)
class CorrelationSet:
    """The eight correlation matrices of the four links.

    psi_* are receive-side, phi_* transmit-side.  Index convention: "1r" and
    "2r" are the relay-to-source (backward) links, "r1" and "r2" the
    source-to-relay (forward) links.
    """

    psi_1r: np.ndarray
    phi_1r: np.ndarray
    psi_2r: np.ndarray
    phi_2r: np.ndarray
    psi_r1: np.ndarray
    phi_r1: np.ndarray
    psi_r2: np.ndarray
    phi_r2: np.ndarray

    def backward_rx(self, node: int) -> np.ndarray:
        return self.psi_1r if node == 1 else self.psi_2r

    def backward_tx(self, node: int) -> np.ndarray:
        return self.phi_1r if node == 1 else self.phi_2r

    def forward_rx(self, node: int) -> np.ndarray:
        return self.psi_r1 if node == 1 else self.psi_r2

    def forward_tx(self, node: int) -> np.ndarray:
        return self.phi_r1 if node == 1 else self.phi_r2


def build_correlations(cfg: SystemConfig) -> CorrelationSet:
    """Correlation matrices for all four links from the configured spacings.

    Source-side arrays (receive side of the backward links, transmit side of
    the forward links) use the source spacings; relay-side arrays use the
    relay spacing.
    """
    return CorrelationSet(
        psi_1r=correlation_matrix(cfg.n1, cfg.spacing_s1),
        phi_1r=correlation_matrix(cfg.nr, cfg.spacing_r),
        psi_2r=correlation_matrix(cfg.n2, cfg.spacing_s2),
        phi_2r=correlation_matrix(cfg.nr, cfg.spacing_r),
        psi_r1=correlation_matrix(cfg.nr, cfg.spacing_r),
        phi_r1=correlation_matrix(cfg.n1, cfg.spacing_s1),
        psi_r2=correlation_matrix(cfg.nr, cfg.spacing_r),
        phi_r2=correlation_matrix(cfg.n2, cfg.spacing_s2),
    )


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the four links."""

    h_1r: np.ndarray
    h_2r: np.ndarray
    h_r1: np.ndarray
    h_r2: np.ndarray

    def backward(self, node: int) -> np.ndarray:
        return self.h_1r if node == 1 else self.h_2r

    def forward(self, node: int) -> np.ndarray:
        return self.h_r1 if node == 1 else self.h_r2


def _sample_link(psi, phi, rows, cols, stream):
    g = sample_complex_gaussian(rows, cols, stream)
    return hermitian_sqrt(psi) @ g @ hermitian_sqrt(phi)


def sample_channels(corr: CorrelationSet, stream: RngStream) -> ChannelSet:
    """Draw one independent realization of all four links.

    Each link uses its own child substream, so the draw is reproducible per
    link and the links stay independent.
    """
    n1 = corr.psi_1r.shape[0]
    n2 = corr.psi_2r.shape[0]
    nr = corr.psi_r1.shape[0]
    return ChannelSet(
        h_1r=_sample_link(corr.psi_1r, corr.phi_1r, n1, nr, stream.child(0)),
        h_2r=_sample_link(corr.psi_2r, corr.phi_2r, n2, nr, stream.child(1)),
        h_r1=_sample_link(corr.psi_r1, corr.phi_r1, nr, n1, stream.child(2)),
        h_r2=_sample_link(corr.psi_r2, corr.phi_r2, nr, n2, stream.child(3)),
    )


def forward_prior_covariance(corr: CorrelationSet) -> np.ndarray:
    """Prior covariance of the stacked forward-channel vector.

    The stacked vector is [vec(H_r1); vec(H_r2)]; since vec(S G T) has
    covariance (T T^H)^T kron (S S^H), each block is phi^T kron psi and the
    cross blocks vanish by link independence.
    """
    block1 = kron(corr.phi_r1.T, corr.psi_r1)
    block2 = kron(corr.phi_r2.T, corr.psi_r2)
    n1 = block1.shape[0]
    n2 = block2.shape[0]
    out = np.zeros((n1 + n2, n1 + n2), dtype=np.result_type(block1, block2))
    out[:n1, :n1] = block1
    out[n1:, n1:] = block2
    return out
