"""Command-line front end for the relay training simulator.

Four subcommands:

``stage1``     backward-link NMSE sweep (relay pilots, least-squares).
``stage2``     forward-link NMSE sweep (source pilots, linear MMSE).
``reproduce``  canned presets: figure 2 runs the backward sweep for both
               antenna-spacing scenarios, figures 3 and 4 run the forward
               sweep for the all-strong and mixed scenarios.
``oracle``     independent self-checks, one result line per check.

A config file (``key = value`` lines) supplies defaults; ``--seed``,
``--trials`` and ``--variant`` override it.  Results land in a CSV whose
rows are sorted and formatted deterministically, so identical invocations
produce identical bytes.

Exit status: 0 on success, 1 for configuration problems, 2 when a numeric
check failed or the allocation solver had to fall back (details are written
next to the CSV as ``<out>.report.txt``).
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import harness, oracle
from .config import (ConfigError, STAGE_BACKWARD, STAGE_FORWARD, VARIANT_DERIVED,
                     VARIANTS, config_from_raw, parse_config_text)
from .linalg import RngStream

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

FIGURE_PRESETS = {
    2: (STAGE_BACKWARD, ("all_strong", "s1_weak")),
    3: (STAGE_FORWARD, ("all_strong",)),
    4: (STAGE_FORWARD, ("s1_weak",)),
}

log = logging.getLogger(__name__)


def _read_raw(path):
    """Parse the config file into a raw key dict ({} when no file given)."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    return parse_config_text(text)


def _overlay(raw, args, stage, scenario=None):
    """Apply command-line overrides on top of the parsed config keys."""
    raw = dict(raw)
    raw["stage"] = stage
    if scenario is not None:
        raw["scenario"] = scenario
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.trials is not None:
        raw["trials"] = args.trials
    if getattr(args, "variant", None) is not None:
        raw["delta_variant"] = args.variant
    return raw


def _run_plan(raw):
    cfg, plan, extras = config_from_raw(raw)
    if plan.stage == STAGE_BACKWARD:
        return harness.run_stage1_experiment(
            cfg, plan, relay_loadings=extras["relay_loadings"])
    return harness.run_stage2_experiment(cfg, plan)


def _finish(records, out):
    """Write the CSV, report solver fallbacks, pick the exit code."""
    harness.emit_csv(records, out)
    total = sum(r.trials for r in records)
    print(f"wrote {len(records)} rows ({total} trial evaluations) to {out}")
    failed = [r for r in records if r.failures]
    if not failed:
        return EXIT_OK
    report = f"{out}.report.txt"
    with open(report, "w", encoding="utf-8") as fh:
        fh.write("allocation solver fallbacks per cell\n")
        fh.write("scenario,scheme,p_db,failures,trials\n")
        for r in failed:
            fh.write(f"{r.scenario},{r.scheme},{r.p_db:g},{r.failures},{r.trials}\n")
    print(f"solver fell back to a uniform split in {len(failed)} cells; "
          f"see {report}", file=sys.stderr)
    return EXIT_NUMERICAL


def cmd_stage1(args):
    raw = _overlay(_read_raw(args.config), args, STAGE_BACKWARD)
    return _finish(_run_plan(raw), args.out or "stage1.csv")


def cmd_stage2(args):
    raw = _overlay(_read_raw(args.config), args, STAGE_FORWARD)
    return _finish(_run_plan(raw), args.out or "stage2.csv")


def cmd_reproduce(args):
    stage, scenarios = FIGURE_PRESETS[args.figure]
    base = _read_raw(args.config)
    records = []
    for scenario in scenarios:
        records.extend(_run_plan(_overlay(base, args, stage, scenario=scenario)))
    return _finish(records, args.out or f"figure{args.figure}.csv")


def cmd_oracle(args):
    """Run the adjudication battery and gate on the shipped variant."""
    stream = RngStream(args.seed if args.seed is not None else 0)
    variant = args.variant or VARIANT_DERIVED
    n = args.instances
    reports = [
        oracle.gaussian_kron_mean_check(stream, trials=args.trials or 100_000),
        oracle.woodbury_equivalence_check(stream, instances=min(100, n)),
        oracle.covariance_gap_check(stream),
    ]
    gated = list(reports)
    for v in VARIANTS:
        report = oracle.bound_direction_check(stream, v, instances=n)
        reports.append(report)
        if v == variant:
            gated.append(report)
    lines = []
    for report in reports:
        mark = "ok" if report.passed else "FAIL"
        lines.append(f"[{mark}] {oracle.format_report(report)}")
    lines.append(f"gating variant: {variant}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK if all(r.passed for r in gated) else EXIT_NUMERICAL


def _add_common(parser, variant=True):
    parser.add_argument("--config", metavar="PATH",
                        help="key = value config file")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials")
    parser.add_argument("--out", metavar="PATH", help="output file")
    if variant:
        parser.add_argument("--variant", choices=VARIANTS,
                            help="scalar-bound flavour used by the optimizer")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="twrelay",
        description="Two-way relay channel-estimation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("stage1", help="backward-link estimation sweep")
    _add_common(p1, variant=False)
    p1.set_defaults(func=cmd_stage1)

    p2 = sub.add_parser("stage2", help="forward-link estimation sweep")
    _add_common(p2)
    p2.set_defaults(func=cmd_stage2)

    rep = sub.add_parser("reproduce", help="run a canned figure preset")
    rep.add_argument("--figure", type=int, choices=sorted(FIGURE_PRESETS),
                     required=True)
    _add_common(rep)
    rep.set_defaults(func=cmd_reproduce)

    orc = sub.add_parser("oracle", help="run the independent self-checks")
    _add_common(orc)
    orc.add_argument("--instances", type=int, default=1000,
                     help="instance count for the per-instance checks")
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
