"""``trajsel`` command line entry point."""

import argparse
import json
import logging
import sys

from . import pipeline
from .config import ConfigError, ScenarioConfig, data_root, load_config
from .perf_model import FEATURE_MODES

__all__ = ["build_parser", "main"]


class JsonLines(logging.Formatter):
    def format(self, record):
        d = {"level": record.levelname.lower(), "event": record.getMessage()}
        d.update(getattr(record, "fields", {}))
        return json.dumps(d, sort_keys=True, default=str)


class Human(logging.Formatter):
    def format(self, record):
        extra = getattr(record, "fields", {})
        tail = " ".join(f"{k}={v}" for k, v in extra.items())
        return f"{record.levelname.lower()}: {record.getMessage()} {tail}".rstrip()


def setup_logging(quiet):
    logger = logging.getLogger("trajsel")
    logger.handlers.clear()
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(Human() if quiet else JsonLines())
    logger.addHandler(h)
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario configuration file")
    common.add_argument("--jobs", type=int, default=1, help="worker count (default 1)")
    common.add_argument("--quiet", action="store_true", help="human-readable warnings only")

    p = argparse.ArgumentParser(prog="trajsel", description="Per-run algorithm selection pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="run A1 and all warm-started branches")
    sub.add_parser("features", parents=[common], help="ELA and TS feature matrices")
    sub.add_parser("train", parents=[common], help="grid-searched forests on the train suite")
    sub.add_parser("evaluate", parents=[common], help="fold-wise evaluation and reports")
    sub.add_parser("transfer", parents=[common], help="train on the train suite, test on the transfer suite")
    sub.add_parser("similarity", parents=[common], help="SVD/Pearson problem similarity")

    s = sub.add_parser("select", help="choose the A2 algorithm for one trajectory file")
    s.add_argument("trajectory", help="a .trj run file")
    s.add_argument("--model", required=True, help="model bundle file")
    s.add_argument("--budget", type=int, required=True, help="A2 budget in evaluations")
    s.add_argument("--mode", choices=FEATURE_MODES, default="ELA")
    s.add_argument("--quiet", action="store_true", help="human-readable warnings only")

    i = sub.add_parser("init-config", help="print a default configuration")
    i.add_argument("--label", default="smoke")
    return p


COMMANDS = {
    "collect": pipeline.cmd_collect,
    "features": pipeline.cmd_features,
    "train": pipeline.cmd_train,
    "evaluate": pipeline.cmd_evaluate,
    "transfer": pipeline.cmd_transfer,
    "similarity": pipeline.cmd_similarity,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "init-config":
        sys.stdout.write(ScenarioConfig(label=args.label).to_text())
        return 0
    setup_logging(args.quiet)
    if args.command == "select":
        d = pipeline.cmd_select(args.trajectory, args.model, args.budget, args.mode)
        print(json.dumps({"run": str(d.run_key), "a2_budget": d.a2_budget, "mode": d.mode,
                          "chosen": d.chosen.name, "tie": d.tie, "predictions": list(d.predictions)}))
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for key, msg in exc.problems:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        result = COMMANDS[args.command](cfg, data_root(cfg), jobs=args.jobs)
    except pipeline.MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if args.command == "evaluate" and any(r.flagged for r in result):
        print("error: at least one fold failed; see the reports", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
