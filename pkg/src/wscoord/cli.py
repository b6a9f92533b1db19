"""Command line entry point: serve, simulate, replay, metrics, diffstat."""

from __future__ import annotations

import argparse
import base64
import csv
import os
import sys
from pathlib import Path

from .config import BIND_ENV_VAR, DEFAULT_BIND, ServiceConfig
from .difftools import unified_diff
from .replay import live_contents, load_events, replay
from .service import serve
from .sim import load_workload, report, run_workload, summarize
from .store import is_text


def _parse_bind(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    config = ServiceConfig.load(Path(args.config) if args.config else None)
    bind = _parse_bind(args.bind or os.environ.get(BIND_ENV_VAR, DEFAULT_BIND))
    root = Path(args.workspace_root)
    if not root.is_dir():
        print(f"workspace root missing: {root}", file=sys.stderr)
        return 2
    server = serve(root, bind, config,
                   Path(args.log) if args.log else None)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_simulate(args) -> int:
    workload = load_workload(Path(args.workload))
    modes = [args.mode] if args.mode else [workload.mode]
    seeds = [int(s) for s in args.seed.split(",")] if args.seed else [workload.seed]
    results = []
    for mode in modes:
        for seed in seeds:
            results.append(run_workload(workload, mode=mode, seed=seed))
    csv_text = report([r.metrics for r in results])
    if args.csv_out:
        Path(args.csv_out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    if args.events_out:
        Path(args.events_out).write_text(
            "".join(r.event_log_text for r in results), encoding="utf-8")
    if args.summary:
        print(summarize([r.metrics for r in results]), file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    events = load_events(Path(args.event_log))
    state = replay(events)
    if args.workspace:
        root = Path(args.workspace)
        disk = {p.relative_to(root).as_posix(): p.read_bytes()
                for p in sorted(root.rglob("*")) if p.is_file()}
        rebuilt = live_contents(state)
        for path in sorted(set(disk) | set(rebuilt)):
            if disk.get(path) != rebuilt.get(path):
                state.problems.append(f"content mismatch vs workspace: {path}")
    for problem in state.problems:
        print(problem, file=sys.stderr)
    for path in sorted(state.versions):
        print(f"{path} v{state.versions[path]}"
              f"{' (deleted)' if path in state.deleted else ''}")
    return 1 if state.problems else 0


METRIC_COLUMNS = ["path", "reads", "writes_accepted", "writes_rejected_direct",
                  "writes_rejected_stale_dependency",
                  "writes_rejected_reservation_held",
                  "writes_rejected_annotation_policy", "external_changes",
                  "annotation_violations"]


def cmd_metrics(args) -> int:
    events = load_events(Path(args.event_log))
    per_path: dict[str, dict[str, int]] = {}

    def bump(path, column):
        row = per_path.setdefault(path, {c: 0 for c in METRIC_COLUMNS[1:]})
        row[column] += 1

    for event in events:
        path = event.get("path")
        if path is None:
            continue
        kind = event["kind"]
        if kind == "read":
            bump(path, "reads")
        elif kind == "write_accepted":
            bump(path, "writes_accepted")
        elif kind == "write_rejected":
            reject_kind = event["detail"].get("kind", "direct")
            bump(path, f"writes_rejected_{reject_kind}")
        elif kind == "external_change":
            bump(path, "external_changes")
        elif kind == "annotation_violation":
            bump(path, "annotation_violations")

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for path in sorted(per_path):
        row = per_path[path]
        writer.writerow([path] + [row[c] for c in METRIC_COLUMNS[1:]])
    return 0


def cmd_diffstat(args) -> int:
    events = load_events(Path(args.event_log))
    contents: dict[str, bytes] = {}
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["seq", "path", "session", "added", "removed"])
    for event in events:
        if event["kind"] == "init":
            for path, b64 in (event["detail"].get("files") or {}).items():
                contents[path] = base64.b64decode(b64)
            continue
        if event["kind"] not in ("write_accepted", "external_change"):
            continue
        detail = event["detail"]
        if "content_b64" not in detail:
            continue
        path = event["path"]
        old = contents.get(path, b"")
        new = base64.b64decode(detail["content_b64"])
        contents[path] = new
        if not (is_text(old) and is_text(new)):
            writer.writerow([event["seq"], path, event.get("session"),
                             "binary", "binary"])
            continue
        diff = unified_diff(old.decode("utf-8"), new.decode("utf-8"))
        added = sum(1 for l in diff.splitlines()
                    if l.startswith("+") and not l.startswith("+++"))
        removed = sum(1 for l in diff.splitlines()
                      if l.startswith("-") and not l.startswith("---"))
        writer.writerow([event["seq"], path, event.get("session"),
                         added, removed])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wscoord",
        description="shared-workspace coordination service and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the coordination service")
    p.add_argument("workspace_root")
    p.add_argument("--bind", help=f"host:port (or ${BIND_ENV_VAR})")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--log", help="event log path (default beside the root)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a workload deterministically")
    p.add_argument("workload")
    p.add_argument("--mode", choices=["shared_occ", "worktree_merge",
                                      "soft_isolation"])
    p.add_argument("--seed", help="seed or comma-separated seeds")
    p.add_argument("--csv-out")
    p.add_argument("--events-out")
    p.add_argument("--summary", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="rebuild state from an event log")
    p.add_argument("event_log")
    p.add_argument("--workspace", help="directory to compare contents against")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics", help="per-path counters from an event log")
    p.add_argument("event_log")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("diffstat", help="line churn per accepted write")
    p.add_argument("event_log")
    p.set_defaults(func=cmd_diffstat)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
