"""Versioned file store: contents, per-file version counters, event log."""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


class StoreError(Exception):
    pass


class NotFound(StoreError):
    """Path is not present in the workspace (distinct from any conflict)."""


class PathCollision(StoreError):
    pass


class BadPath(StoreError):
    pass


def normalize_path(raw: str) -> str:
    """Normalize a workspace-relative path; reject anything escaping the root."""
    if not raw or raw.startswith(("/", "\\")):
        raise BadPath(f"path must be relative: {raw!r}")
    parts = []
    for part in raw.replace("\\", "/").split("/"):
        if part in ("", "."):
            continue
        if part == "..":
            if not parts:
                raise BadPath(f"path escapes workspace root: {raw!r}")
            parts.pop()
        else:
            parts.append(part)
    if not parts:
        raise BadPath(f"empty path after normalization: {raw!r}")
    return "/".join(parts)


def is_text(content: bytes) -> bool:
    # valid UTF-8 with no NUL byte counts as text
    if b"\x00" in content:
        return False
    try:
        content.decode("utf-8")
    except UnicodeDecodeError:
        return False
    return True


@dataclass
class FileRecord:
    path: str
    content: bytes
    version: int
    last_writer: str
    text_kind: bool
    tombstone: bool = False
    # content by version, kept so rejection payloads can diff against what a
    # session actually observed
    history: dict = field(default_factory=dict)

    def content_at(self, version: int) -> Optional[bytes]:
        return self.history.get(version)


class Clock:
    """Millisecond clock; subclassed by the simulator's tick clock."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)


class TickClock(Clock):
    def __init__(self) -> None:
        self.tick = 0

    def now_ms(self) -> int:
        return self.tick

    def advance(self, n: int = 1) -> None:
        self.tick += n


EVENT_KINDS = {
    "init",
    "read",
    "write_accepted",
    "write_rejected",
    "reservation_granted",
    "reservation_released",
    "reservation_expired",
    "annotation_violation",
    "external_change",
    "session_opened",
    "session_closed",
}


class EventLog:
    """Append-only, gapless event sequence with an optional JSONL sink."""

    def __init__(self, clock: Clock, sink_path: Optional[Path] = None):
        self.clock = clock
        self.events: list[dict] = []
        self._sink = open(sink_path, "a", encoding="utf-8") if sink_path else None

    def append(self, kind: str, session: Optional[str], path: Optional[str],
               detail: Optional[dict] = None) -> dict:
        assert kind in EVENT_KINDS, kind
        event = {
            "seq": len(self.events) + 1,
            "kind": kind,
            "session": session,
            "path": path,
            "detail": detail or {},
            "wall_ms": self.clock.now_ms(),
        }
        self.events.append(event)
        if self._sink:
            self._sink.write(json.dumps(event) + "\n")
            self._sink.flush()
        return event

    def close(self) -> None:
        if self._sink:
            self._sink.close()
            self._sink = None

    def dump(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.events)


class Workspace:
    """Authoritative workspace state.

    Mutation goes through apply_change / apply_delete / detect_external_changes
    only; the mediator serializes those calls inside its commit section.
    """

    def __init__(self, clock: Optional[Clock] = None,
                 event_log_path: Optional[Path] = None,
                 backing_dir: Optional[Path] = None):
        self.clock = clock or Clock()
        self.files: dict[str, FileRecord] = {}
        self.log = EventLog(self.clock, event_log_path)
        self.epoch = 0
        self.backing_dir = Path(backing_dir) if backing_dir else None

    # -- construction ------------------------------------------------------

    @classmethod
    def init_from_dir(cls, root: Path, clock: Optional[Clock] = None,
                      event_log_path: Optional[Path] = None,
                      write_through: bool = False) -> "Workspace":
        root = Path(root)
        if not root.is_dir():
            raise StoreError(f"workspace root not a directory: {root}")
        ws = cls(clock=clock, event_log_path=event_log_path,
                 backing_dir=root if write_through else None)
        seen: dict[str, str] = {}
        for p in sorted(root.rglob("*")):
            if not p.is_file():
                continue
            rel = p.relative_to(root).as_posix()
            norm = normalize_path(rel)
            if norm in seen:
                raise PathCollision(f"{rel!r} collides with {seen[norm]!r}")
            seen[norm] = rel
            content = p.read_bytes()
            ws.files[norm] = FileRecord(
                path=norm, content=content, version=1, last_writer="init",
                text_kind=is_text(content), history={1: content})
        ws._log_init()
        return ws

    @classmethod
    def init_from_contents(cls, contents: dict[str, bytes],
                           clock: Optional[Clock] = None,
                           event_log_path: Optional[Path] = None) -> "Workspace":
        ws = cls(clock=clock, event_log_path=event_log_path)
        seen: dict[str, str] = {}
        for raw, content in contents.items():
            norm = normalize_path(raw)
            if norm in seen:
                raise PathCollision(f"{raw!r} collides with {seen[norm]!r}")
            seen[norm] = raw
            ws.files[norm] = FileRecord(
                path=norm, content=content, version=1, last_writer="init",
                text_kind=is_text(content), history={1: content})
        ws._log_init()
        return ws

    def _log_init(self) -> None:
        # initial contents ride in the init event so a log replay can rebuild
        # the workspace without the source directory
        self.log.append("init", None, None, {
            "files": {p: base64.b64encode(r.content).decode("ascii")
                      for p, r in sorted(self.files.items())}})

    # -- queries -----------------------------------------------------------

    def get(self, path: str) -> FileRecord:
        rec = self.files.get(normalize_path(path))
        if rec is None or rec.tombstone:
            raise NotFound(path)
        return rec

    def exists(self, path: str) -> bool:
        rec = self.files.get(normalize_path(path))
        return rec is not None and not rec.tombstone

    def versions(self) -> dict[str, int]:
        """Current version per path (tombstones included: their versions count
        for validity checks)."""
        return {p: r.version for p, r in self.files.items()}

    def live_paths(self) -> list[str]:
        return sorted(p for p, r in self.files.items() if not r.tombstone)

    # -- mutation (call under the mediator's commit lock) ------------------

    def apply_change(self, path: str, new_content: bytes, writer: str,
                     session: Optional[str] = None) -> int:
        path = normalize_path(path)
        rec = self.files.get(path)
        created = rec is None
        recreated = rec is not None and rec.tombstone
        if created:
            rec = FileRecord(path=path, content=new_content, version=1,
                             last_writer=writer, text_kind=is_text(new_content),
                             history={1: new_content})
            self.files[path] = rec
        else:
            prior = rec.version
            rec.content = new_content
            rec.version = prior + 1
            rec.last_writer = writer
            rec.text_kind = is_text(new_content)
            rec.tombstone = False
            rec.history[rec.version] = new_content
        detail = {
            "prior_version": 0 if created else rec.version - 1,
            "new_version": rec.version,
            "created": created,
            "recreated": recreated,
            "content_b64": base64.b64encode(new_content).decode("ascii"),
        }
        self.log.append("write_accepted", session or writer, path, detail)
        if self.backing_dir is not None:
            target = self.backing_dir / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(new_content)
        return rec.version

    def apply_delete(self, path: str, writer: str,
                     session: Optional[str] = None) -> int:
        path = normalize_path(path)
        rec = self.files.get(path)
        if rec is None or rec.tombstone:
            raise NotFound(path)
        rec.version += 1
        rec.content = b""
        rec.tombstone = True
        rec.last_writer = writer
        rec.history[rec.version] = b""
        self.log.append("write_accepted", session or writer, path, {
            "prior_version": rec.version - 1,
            "new_version": rec.version,
            "created": False,
            "deleted": True,
            "content_b64": "",
        })
        if self.backing_dir is not None:
            target = self.backing_dir / path
            if target.exists():
                target.unlink()
        return rec.version

    def detect_external_changes(self, fs_root: Path) -> list[str]:
        """Reconcile the store with an on-disk view; out-of-band edits bump
        versions exactly like mediated writes."""
        fs_root = Path(fs_root)
        if not fs_root.is_dir():
            raise StoreError(f"filesystem view not readable: {fs_root}")
        changed: list[str] = []
        on_disk: dict[str, bytes] = {}
        for p in sorted(fs_root.rglob("*")):
            if p.is_file():
                on_disk[normalize_path(p.relative_to(fs_root).as_posix())] = p.read_bytes()
        for path, content in on_disk.items():
            rec = self.files.get(path)
            if rec is None:
                self.files[path] = FileRecord(
                    path=path, content=content, version=1,
                    last_writer="external", text_kind=is_text(content),
                    history={1: content})
                self.log.append("external_change", None, path, {
                    "prior_version": 0, "new_version": 1, "created": True,
                    "content_b64": base64.b64encode(content).decode("ascii")})
                changed.append(path)
            elif rec.tombstone or rec.content != content:
                prior = rec.version
                rec.content = content
                rec.version = prior + 1
                rec.last_writer = "external"
                rec.text_kind = is_text(content)
                rec.tombstone = False
                rec.history[rec.version] = content
                self.log.append("external_change", None, path, {
                    "prior_version": prior, "new_version": rec.version,
                    "created": False,
                    "content_b64": base64.b64encode(content).decode("ascii")})
                changed.append(path)
        for path, rec in self.files.items():
            if path not in on_disk and not rec.tombstone:
                prior = rec.version
                rec.version = prior + 1
                rec.content = b""
                rec.tombstone = True
                rec.last_writer = "external"
                rec.history[rec.version] = b""
                self.log.append("external_change", None, path, {
                    "prior_version": prior, "new_version": rec.version,
                    "created": False, "deleted": True, "content_b64": ""})
                changed.append(path)
        self.epoch += 1
        return changed
