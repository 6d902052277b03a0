"""Monte Carlo experiment orchestration and CSV emission.

Common-random-numbers design: every random draw is keyed by
(seed, scenario id, trial index, purpose tag), so channels and noise are
shared across the power grid and across pilot schemes within a trial; only
the pilots differ.  Trial t always reads stream t, so growing the trial
count never perturbs earlier trials, and the same (config, seed) pair
reproduces byte-identical CSV output.

Stream tags: 0 channels, 1/2 stage-1 noise at the two sources, 3 stage-2
transmission noise, 5 relay loadings, 6 source loadings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import build_correlations, forward_prior_covariance, sample_channels
from .config import (ExperimentPlan, NMSE_RATIO_OF_MEANS, STAGE_BACKWARD, STAGE_FORWARD,
                     SystemConfig, apply_scenario, db_to_linear)
from .linalg import RngStream, vec
from .stage1 import diagonal_relay_training, ls_estimate, optimal_relay_training, simulate_stage1
from .stage2 import lmmse_estimate, noise_covariance, simulate_stage2
from .training import ConvergenceError, baseline_source_training, optimized_source_training, \
    pilots_from_allocation

logger = logging.getLogger(__name__)

SCENARIO_IDS = {"all_strong": 0, "s1_weak": 1}


@dataclass(frozen=True)
class ExperimentRecord:
    """One figure data point plus per-trial detail for error bars."""

    scenario: str
    scheme: str
    p_db: float
    nmse: float
    trials: int
    seed: int
    per_trial: np.ndarray = field(repr=False, compare=False, default=None)
    failures: int = 0

    def __post_init__(self):
        if not self.nmse > 0:
            raise ValueError("nmse must be positive")

    def standard_error(self) -> float:
        """Standard error of the trial-averaged NMSE."""
        if self.per_trial is None or len(self.per_trial) < 2:
            return float("nan")
        return float(np.std(self.per_trial, ddof=1) / np.sqrt(len(self.per_trial)))


def _record_sort_key(record: ExperimentRecord):
    return (record.scenario, record.scheme, record.p_db)


def _reduce(ratios: np.ndarray, err_sq: np.ndarray, ref_sq: np.ndarray, mode: str) -> float:
    if mode == NMSE_RATIO_OF_MEANS:
        return float(err_sq.sum() / ref_sq.sum())
    return float(ratios.mean())


def run_stage1_experiment(cfg: SystemConfig, plan: ExperimentPlan, relay_loadings=None):
    """Backward-estimation NMSE sweep at the first source.

    For every trial one channel set is drawn; for every grid power and relay
    pilot scheme the same stage-1 noise is replayed, the least-squares
    estimate formed, and the squared-error ratio accumulated.  The diagonal
    scheme draws fresh per-antenna loadings each trial unless
    ``relay_loadings`` fixes their relative sizes.
    """
    if plan.stage != STAGE_BACKWARD:
        raise ValueError(f"plan stage {plan.stage!r} is not a backward-estimation plan")
    cfg = apply_scenario(cfg, plan.scenario)
    corr = build_correlations(cfg)
    sid = SCENARIO_IDS[plan.scenario]
    base = RngStream(plan.seed)
    fixed_fractions = None
    if relay_loadings is not None:
        fixed_fractions = np.asarray(relay_loadings, dtype=float)
        if fixed_fractions.shape != (cfg.nr,) or np.any(fixed_fractions < 0) \
                or fixed_fractions.sum() <= 0:
            raise ValueError(f"relay_loadings needs {cfg.nr} nonnegative entries")
        fixed_fractions = fixed_fractions / fixed_fractions.sum()
    grid = [(float(p_db), db_to_linear(p_db)) for p_db in plan.p_grid_db]
    cells = {(scheme, p_db): (np.zeros(plan.trials), np.zeros(plan.trials))
             for scheme in plan.schemes for p_db, _ in grid}
    for t in range(plan.trials):
        channels = sample_channels(corr, base.child(sid, t, 0))
        h = channels.backward(1)
        ref = float(np.linalg.norm(h) ** 2)
        noise = base.child(sid, t, 1)
        dirichlet = fixed_fractions
        if "diagonal" in plan.schemes and fixed_fractions is None:
            dirichlet = base.child(sid, t, 5).generator().dirichlet(np.ones(cfg.nr))
        for p_db, p in grid:
            cfg_p = replace(cfg, p1=p, p2=p, pr=p)
            for scheme in plan.schemes:
                if scheme == "optimal":
                    train = optimal_relay_training(cfg_p)
                else:
                    train = diagonal_relay_training(cfg_p, p * dirichlet)
                y = simulate_stage1(h, train, cfg.sigma1_sq, noise)
                est = ls_estimate(y, train, cfg.sigma1_sq)
                err = float(np.linalg.norm(est.h_hat - h) ** 2)
                errs, refs = cells[(scheme, p_db)]
                errs[t] = err
                refs[t] = ref
    return _collect_records(cells, plan)


def _build_source_pilots(scheme, est1, est2, corr, cfg_p, diag_stream):
    """Returns (SourceTraining, failed_flag) for one scheme at one power."""
    if scheme == "proposed":
        try:
            train, _ = optimized_source_training(est1.h_hat, est2.h_hat, corr, cfg_p)
            return train, 0
        except ConvergenceError as exc:
            logger.warning("pilot optimization did not converge: %s", exc)
            if exc.allocation is None:
                raise
            return pilots_from_allocation(exc.allocation, corr, cfg_p), 1
    return baseline_source_training(scheme, corr, cfg_p, stream=diag_stream), 0


def run_stage2_experiment(cfg: SystemConfig, plan: ExperimentPlan):
    """Forward-estimation NMSE sweep at the first source.

    Per trial and grid power: both backward channels are estimated with the
    optimal relay pilot, the source pilots are built per scheme (the
    proposed ones re-optimized from that trial's estimates), one stage-2
    transmission is simulated with shared noise, and the LMMSE estimate of
    the stacked forward vector is scored.
    """
    if plan.stage != STAGE_FORWARD:
        raise ValueError(f"plan stage {plan.stage!r} is not a forward-estimation plan")
    cfg = apply_scenario(cfg, plan.scenario)
    corr = build_correlations(cfg)
    r_hc = forward_prior_covariance(corr)
    sid = SCENARIO_IDS[plan.scenario]
    base = RngStream(plan.seed)
    grid = [(float(p_db), db_to_linear(p_db)) for p_db in plan.p_grid_db]
    cells = {(scheme, p_db): (np.zeros(plan.trials), np.zeros(plan.trials))
             for scheme in plan.schemes for p_db, _ in grid}
    failures = {key: 0 for key in cells}
    for t in range(plan.trials):
        channels = sample_channels(corr, base.child(sid, t, 0))
        h_c = np.concatenate([vec(channels.h_r1), vec(channels.h_r2)])
        ref = float(np.linalg.norm(h_c) ** 2)
        noise1 = base.child(sid, t, 1)
        noise2 = base.child(sid, t, 2)
        sim_stream = base.child(sid, t, 3)
        diag_stream = base.child(sid, t, 6)
        for p_db, p in grid:
            cfg_p = replace(cfg, p1=p, p2=p, pr=p)
            relay = optimal_relay_training(cfg_p)
            est1 = ls_estimate(simulate_stage1(channels.backward(1), relay,
                                               cfg.sigma1_sq, noise1), relay, cfg.sigma1_sq)
            est2 = ls_estimate(simulate_stage1(channels.backward(2), relay,
                                               cfg.sigma2_sq, noise2), relay, cfg.sigma2_sq)
            for scheme in plan.schemes:
                train, failed = _build_source_pilots(scheme, est1, est2, corr, cfg_p, diag_stream)
                _, y_1, _ = simulate_stage2(channels, train, cfg_p, sim_stream)
                r_vi = noise_covariance(est1.h_hat, train, corr, cfg_p, node=1)
                fwd = lmmse_estimate(y_1, est1.h_hat, train, r_hc, r_vi, cfg_p, node=1)
                err = float(np.linalg.norm(fwd.h_c_hat - h_c) ** 2)
                errs, refs = cells[(scheme, p_db)]
                errs[t] = err
                refs[t] = ref
                failures[(scheme, p_db)] += failed
    return _collect_records(cells, plan, failures)


def _collect_records(cells, plan: ExperimentPlan, failures=None):
    records = []
    for (scheme, p_db), (errs, refs) in cells.items():
        ratios = errs / refs
        records.append(ExperimentRecord(
            scenario=plan.scenario,
            scheme=scheme,
            p_db=p_db,
            nmse=_reduce(ratios, errs, refs, plan.nmse_mode),
            trials=plan.trials,
            seed=plan.seed,
            per_trial=ratios,
            failures=0 if failures is None else failures[(scheme, p_db)]))
    records.sort(key=_record_sort_key)
    return records


def emit_csv(records, path) -> None:
    """Write records as CSV, sorted and formatted for byte determinism.

    Floats use %.17g: at least 10 significant digits and exact value
    round-trip.
    """
    if not records:
        raise ValueError("no records to write")
    rows = sorted(records, key=_record_sort_key)
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("scenario,scheme,p_db,nmse,trials,seed\n")
        for r in rows:
            fh.write(f"{r.scenario},{r.scheme},{r.p_db:.17g},{r.nmse:.17g},"
                     f"{r.trials},{r.seed}\n")
