"""Shared numerics: Kronecker/vec helpers, DFT bases, Bessel kernel,
Hermitian eigensolves and seeded random streams.

All stochastic code draws through RngStream so that a (seed, stream path)
pair fully determines every sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

HERMITIAN_ATOL = 1e-8
NEGATIVE_EIG_REJECT = -1e-6


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def vec(a) -> np.ndarray:
    """Stack the columns of a matrix into one vector."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v, rows: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size % rows:
        raise ValueError(f"cannot reshape length-{v.size} vector into {rows} rows")
    return v.reshape(rows, -1, order="F")


def dft_unitary(n: int) -> np.ndarray:
    """Unitary DFT matrix, entries exp(-2j*pi*p*q/n)/sqrt(n) with 0-based p, q."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(p, p) / n) / np.sqrt(n)


def bessel_j0(x) -> np.ndarray:
    """Bessel function of the first kind, order zero."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("bessel_j0 requires finite input")
    return special.j0(x)


def _check_hermitian(a: np.ndarray, what: str):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} expects a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    asym = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if asym > HERMITIAN_ATOL * scale:
        raise ValueError(f"{what}: input is not Hermitian (asymmetry {asym:.3e})")


def _canonical_phase(basis: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if np.abs(pivot) > 0:
            out[:, j] = col * (np.conj(pivot) / np.abs(pivot))
    return out


@dataclass(frozen=True)
class EigenData:
    """Eigendecomposition with values sorted descending."""

    basis: np.ndarray
    values: np.ndarray


def eigh(a) -> EigenData:
    """Hermitian eigendecomposition, eigenvalues descending.

    Columns are phase-canonicalized (largest entry real positive) and exact
    eigenvalue ties are broken by descending lexicographic column order, so
    the output is deterministic for structured inputs like the identity.
    """
    a = np.asarray(a)
    _check_hermitian(a, "eigh")
    values, basis = np.linalg.eigh((a + a.conj().T) / 2.0)
    order = np.argsort(values)[::-1]
    values = values[order]
    basis = _canonical_phase(basis[:, order])
    # break exact ties deterministically
    start = 0
    n = values.size
    while start < n:
        stop = start + 1
        while stop < n and values[stop] == values[start]:
            stop += 1
        if stop - start > 1:
            block = basis[:, start:stop]
            keys = [tuple(np.stack([c.real, c.imag], axis=-1).ravel()) for c in block.T]
            perm = sorted(range(stop - start), key=lambda i: keys[i], reverse=True)
            basis[:, start:stop] = block[:, perm]
        start = stop
    return EigenData(basis=basis, values=values)


def hermitian_sqrt(a) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues that are only slightly negative (roundoff) are clamped to
    zero; anything below -1e-6 is rejected as genuinely indefinite.
    """
    a = np.asarray(a)
    _check_hermitian(a, "hermitian_sqrt")
    values, basis = np.linalg.eigh((a + a.conj().T) / 2.0)
    if np.min(values) < NEGATIVE_EIG_REJECT:
        raise ValueError(f"hermitian_sqrt: matrix is not PSD (min eigenvalue {values.min():.3e})")
    values = np.clip(values, 0.0, None)
    root = (basis * np.sqrt(values)) @ basis.conj().T
    if np.isrealobj(a):
        root = root.real
    return root


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, path of integers).

    The path's first element is the per-trial stream id; ``child`` appends
    ids to derive disjoint substreams (per channel, per noise source, ...).
    The same (seed, path) always reproduces the same draws.
    """

    seed: int
    path: tuple = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng((int(self.seed),) + self.path)


def sample_complex_gaussian(rows: int, cols: int, stream: RngStream) -> np.ndarray:
    """Matrix of iid circularly-symmetric complex Gaussians with unit variance.

    Entries are (x + jy)/sqrt(2) with x, y standard normal, so
    E|entry|^2 = 1.  A given stream always yields the same matrix.
    """
    rng = stream.generator()
    parts = rng.standard_normal((2, rows, cols))
    return (parts[0] + 1j * parts[1]) / np.sqrt(2.0)
