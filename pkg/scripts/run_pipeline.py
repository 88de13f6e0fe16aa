#!/usr/bin/env python3
"""Run every pipeline stage for one scenario config and print stage timings.

    python scripts/run_pipeline.py scripts/configs/smoke.cfg
    python scripts/run_pipeline.py scripts/configs/full.cfg --jobs 8

Stages already done on disk are cheap to rerun: collection resumes from the
manifest and the later stages overwrite their outputs.
"""

import argparse
import logging
import sys
import time

from trajsel import pipeline
from trajsel.cli import setup_logging
from trajsel.config import ConfigError, data_root, load_config

STAGES = ("collect", "features", "train", "evaluate", "transfer", "similarity")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--stages", nargs="+", choices=STAGES, default=None,
                    help="subset of stages (default: all applicable)")
    ap.add_argument("--verbose", action="store_true", help="JSON-lines progress on stderr")
    args = ap.parse_args(argv)
    setup_logging(quiet=not args.verbose)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for key, msg in exc.problems:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 2
    root = data_root(cfg)
    stages = args.stages or [s for s in STAGES if s != "transfer" or "transfer" in cfg.suites]
    for stage in stages:
        t0 = time.time()
        fn = getattr(pipeline, f"cmd_{stage}")
        kw = {"echo": logging.getLogger("trajsel").info} if stage == "train" else {}
        fn(cfg, root, jobs=args.jobs, **kw)
        print(f"{stage:<11} {time.time() - t0:8.1f} s", flush=True)
    print(f"outputs under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
