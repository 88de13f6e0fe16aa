#!/usr/bin/env python3
"""Print the mean performance ratios from ``fig4.csv`` as one table per scheme.

    python scripts/summarize.py trajsel-out/reports/smoke
"""

import csv
import os
import sys
from collections import defaultdict

ORDER = ("VBS_RUN", "VBS_IID", "VBS_FID", "SBS", "ELA", "TS", "ELA+TS")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    path = os.path.join(argv[0], "fig4.csv")
    table = defaultdict(dict)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            table[(row["scheme"], int(row["dimension"]), int(row["a2_budget"]))][row["selector"]] = float(row["mean_ratio"])
    cols = [c for c in ORDER if any(c in v for v in table.values())]
    for scheme in sorted({k[0] for k in table}):
        print(f"\n{scheme}")
        print(f"{'D':>3} {'budget':>7} " + " ".join(f"{c:>8}" for c in cols))
        for (s, d, b), v in sorted(table.items()):
            if s == scheme:
                print(f"{d:>3} {b:>7} " + " ".join(f"{v.get(c, float('nan')):8.4f}" for c in cols))
    return 0


if __name__ == "__main__":
    sys.exit(main())
