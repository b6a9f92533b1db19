"""Write-time validation, conflict classification, and reservations.

All snapshot bookkeeping and the validate-then-apply commit section live here;
the contract is that between a write's validation and its application no other
write commits.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from . import annotations as ann
from .difftools import unified_diff
from .sessions import ROLES, Session
from .store import NotFound, Workspace, is_text, normalize_path

BINARY_CHANGED = "<binary changed>"


class ProtocolError(Exception):
    """Client-side contract violation (not a conflict)."""


class UnknownSession(ProtocolError):
    pass


class NotHolder(ProtocolError):
    pass


def validate(snapshot: dict[str, int], versions: dict[str, int]) -> list[tuple[str, int, int]]:
    """Violated snapshot entries: (path, observed, current).

    Pure; a snapshot entry whose path vanished from the store entirely counts
    as violated with current version 0.
    """
    violations = []
    for path, observed in snapshot.items():
        current = versions.get(path, 0)
        if observed != current:
            violations.append((path, observed, current))
    return violations


@dataclass
class Reservation:
    path: str
    holder: str
    granted_at: int  # clock units (ms or ticks)
    ttl: int
    consumed: bool = False
    released: bool = False

    def active(self, now: int) -> bool:
        return not self.consumed and not self.released and now < self.granted_at + self.ttl

    def expired(self, now: int) -> bool:
        return not self.consumed and not self.released and now >= self.granted_at + self.ttl


@dataclass
class ConflictReport:
    kind: str  # direct | stale_dependency | reservation_held | annotation_policy
    stale: list[tuple[str, int, int]] = field(default_factory=list)
    current_target_content: Optional[bytes] = None
    target_diff: Optional[str] = None  # unified diff, or BINARY_CHANGED marker
    reservation: Optional[Reservation] = None
    holder: Optional[str] = None  # for reservation_held
    removed_annotations: list = field(default_factory=list)


@dataclass
class WriteOutcome:
    status: str  # accepted | rejected
    new_version: Optional[int] = None
    conflict: Optional[ConflictReport] = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


@dataclass
class MediatorConfig:
    ttl: int = 30_000  # reservation lifetime in clock units
    reservations_enabled: bool = True
    validation_enabled: bool = True  # False models instruction-only discipline
    annotation_policy: str = "warn"  # warn | strict
    comment_prefixes: Optional[dict] = None


class Mediator:
    """Serializes all workspace mutation behind one commit lock."""

    def __init__(self, store: Workspace, config: Optional[MediatorConfig] = None):
        self.store = store
        self.config = config or MediatorConfig()
        self.sessions: dict[str, Session] = {}
        self.reservations: dict[str, Reservation] = {}
        self._lock = threading.RLock()
        self._next_session = 1

    # -- sessions ----------------------------------------------------------

    def open_session(self, role: str, author: Optional[str] = None) -> Session:
        if role not in ROLES:
            raise ProtocolError(f"unknown role: {role!r}")
        with self._lock:
            sid = f"s{self._next_session}"
            self._next_session += 1
            session = Session(session_id=sid, role=role, author=author or sid,
                              opened_at=len(self.store.log.events) + 1)
            self.sessions[sid] = session
            self.store.log.append("session_opened", sid, None,
                                  {"role": role, "author": session.author})
            return session

    def close_session(self, session_id: str) -> None:
        with self._lock:
            session = self._session(session_id)
            session.closed = True
            for path, res in list(self.reservations.items()):
                if res.holder == session_id and res.active(self._now()):
                    res.released = True
                    self.store.log.append("reservation_released", session_id,
                                          path, {"on_close": True})
            self.store.log.append("session_closed", session_id, None)

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None or session.closed:
            raise UnknownSession(session_id)
        return session

    def _now(self) -> int:
        return self.store.clock.now_ms()

    # -- reads -------------------------------------------------------------

    def mediated_read(self, session_id: str, path: str) -> tuple[bytes, int]:
        with self._lock:
            session = self._session(session_id)
            rec = self.store.get(path)  # raises NotFound; snapshot unchanged
            session.observe(rec.path, rec.version)
            self.store.log.append("read", session_id, rec.path,
                                  {"version": rec.version})
            return rec.content, rec.version

    def refresh_snapshot(self, session_id: str, paths: list[str]) -> dict[str, Optional[int]]:
        """Set listed entries to current versions; content is not returned
        (the rejection payload already carried it)."""
        result: dict[str, Optional[int]] = {}
        with self._lock:
            session = self._session(session_id)
            for raw in paths:
                try:
                    rec = self.store.get(raw)
                except NotFound:
                    result[raw] = None
                    continue
                session.observe(rec.path, rec.version)
                self.store.log.append("read", session_id, rec.path,
                                      {"version": rec.version, "refresh": True})
                result[raw] = rec.version
        return result

    def prune_snapshot(self, session_id: str, paths: list[str]) -> dict[str, int]:
        with self._lock:
            session = self._session(session_id)
            session.prune([normalize_path(p) for p in paths])
            return dict(session.snapshot)

    # -- reservations ------------------------------------------------------

    def reservation_status(self, path: str) -> Optional[Reservation]:
        path = normalize_path(path)
        with self._lock:
            self._reap(path)
            res = self.reservations.get(path)
            return res if res and res.active(self._now()) else None

    def release_reservation(self, session_id: str, path: str) -> None:
        path = normalize_path(path)
        with self._lock:
            self._session(session_id)
            self._reap(path)
            res = self.reservations.get(path)
            if res is None or not res.active(self._now()) or res.holder != session_id:
                raise NotHolder(f"{session_id} does not hold a reservation on {path}")
            res.released = True
            self.store.log.append("reservation_released", session_id, path, {})

    def _reap(self, path: str) -> None:
        res = self.reservations.get(path)
        if res and res.expired(self._now()):
            res.released = True
            self.store.log.append("reservation_expired", res.holder, path,
                                  {"granted_at": res.granted_at, "ttl": res.ttl})

    # -- writes ------------------------------------------------------------

    def submit_write(self, session_id: str, path: str, new_content: bytes,
                     expected_version: Optional[int] = None,
                     delete: bool = False) -> WriteOutcome:
        with self._lock:
            session = self._session(session_id)
            path = normalize_path(path)
            self._reap(path)

            target_exists = path in self.store.files and not self.store.files[path].tombstone
            observed = session.snapshot.get(path)
            if target_exists:
                if observed is None:
                    raise ProtocolError(f"target {path!r} was never read by this session")
                if expected_version is not None and expected_version != observed:
                    raise ProtocolError(
                        f"expected_version {expected_version} does not match "
                        f"tracked observation {observed} for {path!r}")
            else:
                if expected_version not in (None, 0):
                    raise ProtocolError(
                        f"creation of {path!r} must not declare an expected version")
                if delete:
                    raise NotFound(path)

            res = self.reservations.get(path)
            if (self.config.reservations_enabled and res is not None
                    and res.active(self._now()) and res.holder != session_id):
                report = ConflictReport(kind="reservation_held", holder=res.holder)
                self.store.log.append("write_rejected", session_id, path, {
                    "kind": "reservation_held", "holder": res.holder})
                session.retry_counts[path] = session.retry_counts.get(path, 0) + 1
                return WriteOutcome(status="rejected", conflict=report)

            if self.config.validation_enabled:
                violations = validate(session.snapshot, self.store.versions())
            else:
                violations = []

            if violations:
                return self._reject(session, path, violations)

            if (self.config.annotation_policy == "strict" and target_exists
                    and not delete):
                outcome = self._annotation_gate(session, path, new_content)
                if outcome is not None:
                    return outcome
            elif target_exists and not delete:
                self._annotation_warn(session, path, new_content)

            if delete:
                new_version = self.store.apply_delete(path, session.author,
                                                      session=session_id)
            else:
                new_version = self.store.apply_change(path, new_content,
                                                      session.author,
                                                      session=session_id)
            session.observe(path, new_version)
            session.retry_counts[path] = 0
            if res is not None and res.holder == session_id and res.active(self._now()):
                res.consumed = True
                self.store.log.append("reservation_released", session_id, path,
                                      {"consumed": True})
            return WriteOutcome(status="accepted", new_version=new_version)

    def _reject(self, session: Session, path: str,
                violations: list[tuple[str, int, int]]) -> WriteOutcome:
        target_stale = [v for v in violations if v[0] == path]
        kind = "direct" if target_stale else "stale_dependency"
        report = ConflictReport(kind=kind, stale=violations)

        rec = self.store.files.get(path)
        if rec is not None:
            report.current_target_content = rec.content
            if kind == "direct":
                observed = target_stale[0][1]
                old = rec.content_at(observed)
                if old is not None and is_text(old) and rec.text_kind:
                    report.target_diff = unified_diff(
                        old.decode("utf-8"), rec.content.decode("utf-8"),
                        from_name=f"{path}@v{observed}",
                        to_name=f"{path}@v{rec.version}")
                else:
                    report.target_diff = BINARY_CHANGED

        self.store.log.append("write_rejected", session.session_id, path, {
            "kind": kind,
            "stale": [{"path": p, "observed_version": o, "current_version": c}
                      for p, o, c in violations],
        })
        session.retry_counts[path] = session.retry_counts.get(path, 0) + 1

        if self.config.reservations_enabled:
            existing = self.reservations.get(path)
            if (existing is not None and existing.active(self._now())
                    and existing.holder == session.session_id):
                report.reservation = existing
            elif existing is None or not existing.active(self._now()):
                res = Reservation(path=path, holder=session.session_id,
                                  granted_at=self._now(), ttl=self.config.ttl)
                self.reservations[path] = res
                report.reservation = res
                self.store.log.append("reservation_granted", session.session_id,
                                      path, {"ttl": res.ttl})
        return WriteOutcome(status="rejected", conflict=report)

    # -- annotation policy -------------------------------------------------

    def _preservation(self, session: Session, path: str, new_content: bytes):
        rec = self.store.files[path]
        if not rec.text_kind or not is_text(new_content):
            return None
        prefix = ann.comment_prefix_for(path, self.config.comment_prefixes)
        return ann.check_preservation(
            rec.content.decode("utf-8"), new_content.decode("utf-8"),
            writer_author=session.author, policy=self.config.annotation_policy,
            comment_prefix=prefix)

    def _annotation_warn(self, session: Session, path: str, new_content: bytes) -> None:
        report = self._preservation(session, path, new_content)
        if report is not None and not report.clean:
            self.store.log.append("annotation_violation", session.session_id, path, {
                "policy": "warn",
                "removed": [[a.author, a.text] for a in report.removed],
                "modified_blocks": [[a.author, a.text] for a in report.modified_blocks],
            })

    def _annotation_gate(self, session: Session, path: str,
                         new_content: bytes) -> Optional[WriteOutcome]:
        report = self._preservation(session, path, new_content)
        if report is None or not report.removed:
            if report is not None and report.modified_blocks:
                self.store.log.append("annotation_violation", session.session_id,
                                      path, {
                    "policy": "strict",
                    "removed": [],
                    "modified_blocks": [[a.author, a.text]
                                        for a in report.modified_blocks],
                })
            return None
        conflict = ConflictReport(kind="annotation_policy",
                                  removed_annotations=report.removed)
        self.store.log.append("annotation_violation", session.session_id, path, {
            "policy": "strict",
            "removed": [[a.author, a.text] for a in report.removed],
            "modified_blocks": [[a.author, a.text] for a in report.modified_blocks],
        })
        self.store.log.append("write_rejected", session.session_id, path, {
            "kind": "annotation_policy",
            "removed": [[a.author, a.text] for a in report.removed],
        })
        return WriteOutcome(status="rejected", conflict=conflict)

    # -- misc --------------------------------------------------------------

    def sync_fs(self, fs_root) -> list[str]:
        with self._lock:
            return self.store.detect_external_changes(fs_root)

    def stats(self) -> dict[str, int]:
        counters: dict[str, int] = {}
        for event in self.store.log.events:
            counters[event["kind"]] = counters.get(event["kind"], 0) + 1
            if event["kind"] == "write_rejected":
                kind = event["detail"].get("kind", "unknown")
                key = f"write_rejected_{kind}"
                counters[key] = counters.get(key, 0) + 1
        counters["open_sessions"] = sum(
            1 for s in self.sessions.values() if not s.closed)
        return counters
