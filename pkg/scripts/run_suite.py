#!/usr/bin/env python3
"""Run every bundled workload under all three coordination modes.

Produces one CSV row per (workload, mode, seed) plus a per-stratum summary,
e.g.:

    python3 scripts/run_suite.py --seeds 1,2,3 --csv-out suite.csv
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wscoord.sim import load_workload, report, run_workload, summarize  # noqa: E402

MODES = ("shared_occ", "worktree_merge", "soft_isolation")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workloads", default=None,
                        help="directory of workload JSON files "
                             "(default: bundled workloads/)")
    parser.add_argument("--seeds", default="1,2,3",
                        help="comma-separated seed list")
    parser.add_argument("--modes", default=",".join(MODES))
    parser.add_argument("--csv-out", help="write rows here instead of stdout")
    args = parser.parse_args(argv)

    workload_dir = Path(args.workloads) if args.workloads else \
        Path(__file__).resolve().parent.parent / "workloads"
    seeds = [int(s) for s in args.seeds.split(",")]
    modes = args.modes.split(",")

    metrics = []
    for path in sorted(workload_dir.glob("*.json")):
        workload = load_workload(path)
        for mode in modes:
            for seed in seeds:
                result = run_workload(workload, mode=mode, seed=seed)
                metrics.append(result.metrics)

    csv_text = report(metrics)
    if args.csv_out:
        Path(args.csv_out).write_text(csv_text, encoding="utf-8")
        print(f"wrote {len(metrics)} rows to {args.csv_out}")
    else:
        sys.stdout.write(csv_text)
    print(file=sys.stderr)
    print(summarize(metrics), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
