"""Stage-2 pilot design: eigen-domain power allocation via two-loop bisection.

The source pilots are constrained to X_k = conj(U_phi_k) diag(sqrt(gamma_k))
conj(Xi_k), with U_phi_k the transmit-correlation eigenbasis and Xi_k
row-orthonormal splits of a padded DFT matrix, which keeps the two users'
pilots orthogonal and turns the MSE surrogate into a separable scalar sum

    J(gamma) = sum over (user k, direction s, destination i, mode l) of
               1 / (a[k][s, l] + gamma[k][s] * b[k][i, l]).

Two scalar forms are supported.  ``paper_scalar`` uses
a = 1/(sigmar^2 * lambda * sigma), b = delta, with delta the diagonal entries
of the rotated inverse link kernel.  ``derived_matrix`` uses
a = 1/(lambda * sigma), b = 1/(sigmar^2 * delta), which is the form the
diagonal-replacement bound argument actually yields; it is certified as a
true upper bound by the oracle module and is the default.

The allocation is found by bisecting each direction's stationarity condition
(inner loop) inside a bisection on the power multiplier (outer loop).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import CorrelationSet
from .config import SystemConfig, VARIANT_DERIVED, VARIANT_PAPER, VARIANTS
from .linalg import RngStream, dft_unitary, eigh
from .stage2 import SourceTraining, backward_link_gain

logger = logging.getLogger(__name__)

MU_LOWER = 1e-12
KERNEL_CONDITION_LIMIT = 1e12
KERNEL_RIDGE = 1e-8
PRIOR_EIG_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    """Solver failed to meet tolerance; carries the best allocation found."""

    def __init__(self, message, allocation=None):
        super().__init__(message)
        self.allocation = allocation


@dataclass(frozen=True)
class ScalarProblem:
    """Scalar data of the allocation problem.

    lam[k]   eigenvalues of user k's transmit correlation (descending)
    sigma[k] eigenvalues of the relay receive correlation for user k
    delta[i, k, l] link-kernel coefficient of destination i in user k's
             relay eigenbasis: under ``paper_scalar`` the diagonal entries
             of the rotated inverse kernel; under ``derived_matrix`` their
             reciprocals (the Schur complements of the rotated kernel)
    p[k]     power budget of user k
    """

    lam: tuple
    sigma: tuple
    delta: np.ndarray
    sigmar_sq: float
    p: tuple
    variant: str = VARIANT_DERIVED

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.sigmar_sq <= 0:
            raise ValueError("sigmar_sq must be positive")
        if len(self.lam) != 2 or len(self.sigma) != 2 or len(self.p) != 2:
            raise ValueError("lam, sigma and p must have one entry per user")
        delta = np.asarray(self.delta)
        if delta.ndim != 3 or delta.shape[1] != 2:
            raise ValueError(f"delta must have shape (destinations, 2, modes), got {delta.shape}")
        for k in range(2):
            if not np.all(np.asarray(self.lam[k]) > 0):
                raise ValueError(f"lam[{k}] must be positive")
            if not np.all(np.asarray(self.sigma[k]) > 0):
                raise ValueError(f"sigma[{k}] must be positive")
            if np.asarray(self.sigma[k]).shape[0] != delta.shape[2]:
                raise ValueError("sigma and delta mode counts disagree")
            if not self.p[k] > 0:
                raise ValueError(f"p[{k}] must be positive")
        if not np.all(delta > 0):
            raise ValueError("delta must be positive")

    def directions(self, k: int) -> int:
        return np.asarray(self.lam[k]).shape[0]


def _term_arrays(prob: ScalarProblem, k: int):
    """Per-user coefficient arrays: a (directions x modes), b (destinations x modes).

    Each objective term is 1/(a[s, l] + gamma[s] * b[i, l]).  Under
    ``paper_scalar`` the relay noise divides the constant term; under
    ``derived_matrix`` it divides the power term.
    """
    lam = np.asarray(prob.lam[k], dtype=float)
    sig = np.asarray(prob.sigma[k], dtype=float)
    d = np.asarray(prob.delta, dtype=float)[:, k, :]
    if prob.variant == VARIANT_PAPER:
        a = 1.0 / (prob.sigmar_sq * np.outer(lam, sig))
        b = d
    else:
        a = 1.0 / np.outer(lam, sig)
        b = d / prob.sigmar_sq
    return a, b


def allocation_objective(prob: ScalarProblem, gamma) -> float:
    """The scalar MSE surrogate at a given allocation."""
    total = 0.0
    for k in range(2):
        a, b = _term_arrays(prob, k)
        g = np.asarray(gamma[k], dtype=float)
        if g.shape != (a.shape[0],):
            raise ValueError(f"gamma[{k}] must have {a.shape[0]} entries")
        if np.any(g < 0):
            raise ValueError("gamma must be nonnegative")
        denom = a[:, None, :] + g[:, None, None] * b[None, :, :]
        total += float((1.0 / denom).sum())
    return total


def _residuals(a, b, gamma, mu):
    """Stationarity residual mu - sum_{i,l} b/(a + gamma*b)^2 for every direction."""
    denom = a[:, None, :] + gamma[:, None, None] * b[None, :, :]
    return mu - (b[None, :, :] / denom ** 2).sum(axis=(1, 2))


def stationarity_residual(prob: ScalarProblem, k: int, s: int, gamma: float, mu: float) -> float:
    """Partial derivative of the penalized objective for one direction.

    Negative at gamma = 0 means the direction still wants power at this
    multiplier; for large gamma the derivative approaches mu.
    """
    a, b = _term_arrays(prob, k)
    return float(_residuals(a, b, np.full(a.shape[0], float(gamma)), mu)[s])


def objective_curvature(prob: ScalarProblem, k: int, s: int, gamma: float) -> float:
    """Second derivative of the objective along one direction (always positive)."""
    a, b = _term_arrays(prob, k)
    denom = a[s, None, :] + float(gamma) * b
    return float((2.0 * b ** 2 / denom ** 3).sum())


def _bisect_all(a, b, mu, cap, tol, max_iter, f_tol=np.inf):
    """Vectorized bisection of every direction's stationarity condition.

    Directions whose residual at 0 is already nonnegative stay at 0.  For
    the rest the root is bracketed in [0, cap]; iteration stops when the
    bracket width is at or below tol and the midpoint residual within f_tol
    (or the bracket has collapsed to machine resolution).  Returns (gamma,
    iterations).
    """
    n = a.shape[0]
    gamma = np.zeros(n)
    f0 = _residuals(a, b, gamma, mu)
    need = f0 < 0.0
    if not need.any():
        return gamma, 0
    lo = np.zeros(n)
    hi = np.full(n, float(cap))
    iters = 0
    while iters < max_iter:
        mid = 0.5 * (lo + hi)
        # a midpoint equal to an endpoint means the bracket is already at
        # machine resolution and cannot improve
        stuck = (mid == lo) | (mid == hi)
        f_mid = _residuals(a, b, mid, mu)
        below = f_mid < 0.0
        lo = np.where(need & below & ~stuck, mid, lo)
        hi = np.where(need & ~below & ~stuck, mid, hi)
        iters += 1
        width_done = (hi - lo) <= tol
        res_done = np.abs(f_mid) <= f_tol
        if np.all(~need | (width_done & res_done) | stuck):
            break
    gamma = np.where(need, 0.5 * (lo + hi), 0.0)
    return gamma, iters


def bisect_direction(prob: ScalarProblem, k: int, s: int, mu: float,
                     tol: float = None, max_iter: int = 200) -> float:
    """Power for one direction at a fixed multiplier, found by bisection.

    Returns 0 immediately when the residual at 0 is already nonnegative.
    """
    a, b = _term_arrays(prob, k)
    if tol is None:
        tol = 1e-9 * prob.p[k]
    gamma, _ = _bisect_all(a, b, mu, prob.p[k], tol, max_iter)
    return float(gamma[s])


@dataclass(frozen=True)
class PowerAllocation:
    """Solver output: per-user direction powers, multipliers and diagnostics."""

    gamma: tuple
    mu: tuple
    iterations: tuple
    kkt_residual: float

    def __post_init__(self):
        for g in self.gamma:
            if np.any(np.asarray(g) < 0):
                raise ValueError("allocation contains negative power")


def _kkt_residual(a, b, gamma, mu, p_k) -> float:
    f = _residuals(a, b, gamma, mu)
    stationarity = np.where(gamma > 0, np.abs(f), np.maximum(0.0, -f))
    power = abs(float(gamma.sum()) - p_k)
    return max(float(stationarity.max()), power)


def _solve_user(a, b, p_k, tol_outer, tol_inner, max_iter):
    n = a.shape[0]
    if n == 1:
        # the whole budget goes to the single direction; the multiplier is
        # the gradient magnitude there
        gamma = np.array([float(p_k)])
        mu = float((b / (a[0, None, :] + p_k * b) ** 2).sum())
        return gamma, mu, 0
    grad0 = (b[None, :, :] / a[:, None, :] ** 2).sum(axis=(1, 2))
    mu_lo = MU_LOWER
    mu_hi = float(grad0.max())
    mu = mu_hi
    gamma = np.zeros(n)
    converged = False
    outer = 0
    # the summed budget can only be matched if each direction's power is
    # resolved finer than the budget tolerance
    width = min(tol_inner, tol_outer / (2.0 * n))
    while outer < max_iter:
        mu = 0.5 * (mu_lo + mu_hi)
        gamma, _ = _bisect_all(a, b, mu, p_k, width, max_iter)
        total = float(gamma.sum())
        outer += 1
        if abs(total - p_k) <= tol_outer:
            converged = True
            break
        if total > p_k:
            mu_lo = mu
        else:
            mu_hi = mu
    # polish: drive each positive direction's residual toward zero at the
    # final multiplier so the stationarity certificate is tight
    gamma, _ = _bisect_all(a, b, mu, p_k, 0.0, max_iter, f_tol=1e-10)
    if not converged and abs(float(gamma.sum()) - p_k) > tol_outer:
        return gamma, mu, -outer
    return gamma, mu, outer


def optimize_allocation(prob: ScalarProblem, tol_outer=None, tol_inner=None,
                        max_iter: int = 200) -> PowerAllocation:
    """Solve both users' allocations by two-loop bisection.

    The outer loop bisects the power multiplier until the budget is met; the
    inner loop bisects each direction's stationarity condition.  Raises
    ConvergenceError (carrying the best allocation) if the budget cannot be
    matched within tolerance.
    """
    gammas = []
    mus = []
    iters = []
    kkt = 0.0
    failed = False
    for k in range(2):
        a, b = _term_arrays(prob, k)
        p_k = float(prob.p[k])
        t_out = 1e-8 * p_k if tol_outer is None else tol_outer
        t_in = 1e-9 * p_k if tol_inner is None else tol_inner
        logger.debug("user %d: nominal start %g per direction (bisection "
                     "brackets make the start point irrelevant)",
                     k + 1, math.sqrt(p_k / prob.directions(k)))
        gamma, mu, outer = _solve_user(a, b, p_k, t_out, t_in, max_iter)
        if outer < 0:
            failed = True
            outer = -outer
        gammas.append(gamma)
        mus.append(mu)
        iters.append(outer)
        kkt = max(kkt, _kkt_residual(a, b, gamma, mu, p_k))
    allocation = PowerAllocation(gamma=tuple(gammas), mu=tuple(mus),
                                 iterations=tuple(iters), kkt_residual=kkt)
    if failed:
        raise ConvergenceError(
            f"power budget not met within tolerance (kkt residual {kkt:.3e})",
            allocation=allocation)
    return allocation


def split_unitary_rows(n1: int, n2: int, l: int):
    """Row-orthonormal pilot bases for the two users.

    A DFT matrix of size n1 + n2 is zero-padded to length l and split by
    rows, so each user's block has orthonormal rows and the two blocks have
    exactly orthogonal row spaces.
    """
    total = n1 + n2
    if l < total:
        raise ValueError(f"pilot length l={l} shorter than n1+n2={total}")
    xi = np.zeros((total, l), dtype=complex)
    xi[:, :total] = dft_unitary(total)
    return xi[:n1], xi[n1:]


def assemble_source_pilot(u_phi, gamma, xi) -> np.ndarray:
    """Pilot block conj(U_phi) diag(sqrt(gamma)) conj(Xi).

    Carries gamma[s] of power on the s-th transmit-correlation eigenvector;
    total power is sum(gamma).
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")
    u_phi = np.asarray(u_phi)
    xi = np.asarray(xi)
    if u_phi.shape[1] != gamma.shape[0] or xi.shape[0] != gamma.shape[0]:
        raise ValueError("gamma length must match basis and pilot rows")
    return (u_phi.conj() * np.sqrt(gamma)[None, :]) @ xi.conj()


def _regularized_kernel(h_hat, noise_var):
    e = backward_link_gain(h_hat, noise_var)
    if np.linalg.cond(e) > KERNEL_CONDITION_LIMIT:
        logger.warning("link kernel rank-deficient; adding ridge %g", KERNEL_RIDGE)
        e = e + KERNEL_RIDGE * np.eye(e.shape[0])
    return e


def build_scalar_problem(h_hat_1r, h_hat_2r, corr: CorrelationSet, cfg: SystemConfig,
                         variant: str = None) -> ScalarProblem:
    """Reduce the matrix MSE surrogate to its scalar coefficient data.

    Eigendecomposes each user's transmit and relay-side correlations and
    rotates both destinations' inverse link kernels into the relay
    eigenbasis.  The link kernel is evaluated at the destination's own
    noise level; the relay noise power enters the scalar terms separately,
    on the prior term for ``paper_scalar`` and on the gamma*delta term for
    ``derived_matrix``.  With the reciprocal-diagonal delta the latter's
    terms are Schur complements of per-mode information blocks, making the
    scalar sum a certifiable upper bound on the surrogate MSE.
    """
    if variant is None:
        variant = cfg.delta_variant
    lam = []
    sigma = []
    u_psis = []
    for k in (1, 2):
        tx = eigh(corr.forward_tx(k))
        rx = eigh(corr.forward_rx(k))
        if tx.values.min() <= PRIOR_EIG_FLOOR or rx.values.min() <= PRIOR_EIG_FLOOR:
            raise ValueError(f"user {k} correlation is singular; cannot form scalar problem")
        lam.append(tx.values.copy())
        sigma.append(rx.values.copy())
        u_psis.append(rx.basis)
    h_hats = (h_hat_1r, h_hat_2r)
    n_modes = sigma[0].shape[0]
    delta = np.zeros((2, 2, n_modes))
    for i in (1, 2):
        level = cfg.noise_var(i)
        e_inv = np.linalg.inv(_regularized_kernel(h_hats[i - 1], level))
        for k in (1, 2):
            rotated = u_psis[k - 1].conj().T @ e_inv @ u_psis[k - 1]
            diag = np.real(np.diag(rotated))
            if variant == VARIANT_PAPER:
                delta[i - 1, k - 1, :] = diag
            else:
                delta[i - 1, k - 1, :] = 1.0 / diag
    return ScalarProblem(lam=tuple(lam), sigma=tuple(sigma), delta=delta,
                         sigmar_sq=cfg.sigmar_sq, p=(cfg.p1, cfg.p2), variant=variant)


def pilots_from_allocation(alloc: PowerAllocation, corr: CorrelationSet,
                           cfg: SystemConfig) -> SourceTraining:
    """Assemble both users' pilot blocks from direction powers."""
    xi1, xi2 = split_unitary_rows(cfg.n1, cfg.n2, cfg.l)
    x = []
    for k, xi in ((1, xi1), (2, xi2)):
        u_phi = eigh(corr.forward_tx(k)).basis
        x.append(assemble_source_pilot(u_phi, alloc.gamma[k - 1], xi))
    return SourceTraining(x1=x[0], x2=x[1], scheme="proposed")


def optimized_source_training(h_hat_1r, h_hat_2r, corr: CorrelationSet, cfg: SystemConfig,
                              variant: str = None):
    """Design both users' pilots from the backward estimates.

    Returns (SourceTraining, PowerAllocation).  The pilots carry the
    optimized direction powers on the transmit-correlation eigenvectors and
    use orthogonal row spaces for the two users.
    """
    prob = build_scalar_problem(h_hat_1r, h_hat_2r, corr, cfg, variant)
    alloc = optimize_allocation(prob)
    return pilots_from_allocation(alloc, corr, cfg), alloc


def baseline_source_training(scheme: str, corr: CorrelationSet, cfg: SystemConfig,
                             stream: RngStream = None, loadings=None) -> SourceTraining:
    """Reference pilots: uniform row-orthonormal or randomly loaded diagonal.

    ``orthogonal`` spreads each budget evenly, sqrt(p_k/n_k) Xi_k.
    ``diagonal`` draws power loadings from a symmetric Dirichlet (or takes
    them from ``loadings``) and applies their square roots to Xi_k's rows.
    """
    xi1, xi2 = split_unitary_rows(cfg.n1, cfg.n2, cfg.l)
    if scheme == "orthogonal":
        x1 = np.sqrt(cfg.p1 / cfg.n1) * xi1
        x2 = np.sqrt(cfg.p2 / cfg.n2) * xi2
        return SourceTraining(x1=x1, x2=x2, scheme=scheme)
    if scheme == "diagonal":
        loads = []
        for k, xi in ((1, xi1), (2, xi2)):
            n_k = cfg.antennas(k)
            if loadings is not None:
                load = np.asarray(loadings[k - 1], dtype=float)
                if load.shape != (n_k,):
                    raise ValueError(f"user {k} needs {n_k} loadings")
            else:
                if stream is None:
                    raise ValueError("diagonal scheme needs a stream or explicit loadings")
                rng = stream.child(k).generator()
                load = cfg.power(k) * rng.dirichlet(np.ones(n_k))
            if np.any(load < 0):
                raise ValueError("loadings must be nonnegative")
            total = float(load.sum())
            if abs(total - cfg.power(k)) > 1e-9 * max(1.0, cfg.power(k)):
                raise ValueError(f"user {k} loadings sum {total!r} != budget {cfg.power(k)!r}")
            loads.append(np.sqrt(load)[:, None] * xi)
        return SourceTraining(x1=loads[0], x2=loads[1], scheme=scheme)
    raise ValueError(f"unknown baseline scheme {scheme!r}")
