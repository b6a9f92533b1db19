"""Per-client sessions and their read snapshots."""

from __future__ import annotations

from dataclasses import dataclass, field

ROLES = ("manager", "engineer", "external_tool")


@dataclass
class Session:
    session_id: str
    role: str
    author: str
    opened_at: int  # event seq at open
    snapshot: dict[str, int] = field(default_factory=dict)  # path -> observed version
    retry_counts: dict[str, int] = field(default_factory=dict)
    closed: bool = False

    def observe(self, path: str, version: int) -> None:
        self.snapshot[path] = version

    def prune(self, paths: list[str]) -> None:
        for path in paths:
            self.snapshot.pop(path, None)
