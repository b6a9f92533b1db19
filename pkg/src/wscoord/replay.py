"""Event-log replay: state reconstruction and invariant auditing."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path


class ReplayError(Exception):
    pass


@dataclass
class ReplayState:
    versions: dict[str, int] = field(default_factory=dict)
    contents: dict[str, bytes] = field(default_factory=dict)
    deleted: set = field(default_factory=set)
    # per accepted write: (seq, session, path, prior_version, new_version)
    accepted_writes: list = field(default_factory=list)
    # session -> path -> observed version, rebuilt from read events
    observations: dict[str, dict[str, int]] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)


def load_events(path: Path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def replay(events: list[dict]) -> ReplayState:
    """Rebuild per-path versions and contents; collect invariant violations.

    Checks: gapless event seq; per-path version sequences 1,2,3,...; every
    accepted write's prior version equal to the writer's recorded observation
    (no lost update).
    """
    state = ReplayState()
    expected_seq = 1
    for event in events:
        if event["seq"] != expected_seq:
            state.problems.append(
                f"event seq gap: expected {expected_seq}, got {event['seq']}")
        expected_seq = event["seq"] + 1
        kind = event["kind"]
        path = event.get("path")
        detail = event.get("detail") or {}
        session = event.get("session")

        if kind == "init":
            for p, b64 in (detail.get("files") or {}).items():
                state.versions[p] = 1
                state.contents[p] = base64.b64decode(b64)
        elif kind == "read":
            state.observations.setdefault(session, {})[path] = detail["version"]
        elif kind in ("write_accepted", "external_change"):
            prior = detail.get("prior_version", 0)
            new = detail.get("new_version")
            current = state.versions.get(path, 0)
            if prior != current:
                state.problems.append(
                    f"seq {event['seq']}: {path} version gap "
                    f"(log prior {prior}, replayed current {current})")
            if new != prior + 1 and not detail.get("created"):
                state.problems.append(
                    f"seq {event['seq']}: {path} non-unit version bump "
                    f"({prior} -> {new})")
            state.versions[path] = new
            if "content_b64" in detail:
                state.contents[path] = base64.b64decode(detail["content_b64"])
            if detail.get("deleted"):
                state.deleted.add(path)
            else:
                state.deleted.discard(path)
            if kind == "write_accepted":
                observed = state.observations.get(session, {}).get(path)
                state.accepted_writes.append(
                    (event["seq"], session, path, prior, new, observed))
                if not detail.get("created") and observed is not None \
                        and observed != prior:
                    state.problems.append(
                        f"seq {event['seq']}: lost update on {path} "
                        f"(observed {observed}, pre-commit {prior})")
                state.observations.setdefault(session, {})[path] = new
    return state


def live_contents(state: ReplayState) -> dict[str, bytes]:
    return {p: c for p, c in state.contents.items() if p not in state.deleted}
