"""Command line entry point: ``run``, ``compare-estimators`` and ``smoke``."""

import argparse
import json
import sys
from dataclasses import fields

from .config import PROFILES, ExperimentConfig, load_config
from .exceptions import GLRBanditError
from .runner import compare_estimators, run_experiment

ALIASES = {"seeds": "n_seeds", "out": "output_dir"}


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--profile", default="desk", choices=sorted(PROFILES),
                        help="defaults applied before the file (default: desk)")
    parser.add_argument("--seeds", dest="n_seeds", help="number of seeds")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    group = parser.add_argument_group("config overrides")
    for f in fields(ExperimentConfig):
        if f.name in ALIASES.values():
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="VALUE")


def _overrides(args):
    return {f.name: getattr(args, f.name, None) for f in fields(ExperimentConfig)}


def build_parser():
    parser = argparse.ArgumentParser(prog="glrbandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one algorithm over seeded repetitions")
    _add_config_flags(run)
    cmp_ = sub.add_parser("compare-estimators", help="regret and transformed error, stein vs loglik")
    _add_config_flags(cmp_)
    smoke = sub.add_parser("smoke", help="fast end-to-end run of the smoke profile")
    smoke.add_argument("--out", dest="output_dir", default="smoke_out")
    smoke.add_argument("--seed-base", dest="seed_base", default=None)
    return parser


def _print_summary(s):
    print(f"{s.algorithm}: mean final regret {s.mean:.4f} +/- {s.stderr:.4f} over {len(s.finals)} seeds"
          f" (fingerprint {s.config_fingerprint[:12]})")
    for seed, err in s.failures.items():
        print(f"  seed {seed} failed: {err}", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "smoke":
            cfg = load_config(profile="smoke", overrides={"seed_base": args.seed_base,
                                                          "output_dir": args.output_dir})
            s = run_experiment(cfg)
            _print_summary(s)
            return 1 if s.failures else 0
        cfg = load_config(args.config, args.profile, _overrides(args))
        if args.command == "run":
            s = run_experiment(cfg)
            _print_summary(s)
            print(f"wrote {cfg.output_dir}")
            return 1 if s.failures else 0
        report = compare_estimators(cfg)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    except (GLRBanditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
