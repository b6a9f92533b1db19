"""Newline-delimited JSON protocol server exposing the mediator.

One JSON object per line in each direction; conflict rejections are ordinary
ok-responses with a rejected body, never transport errors.
"""

from __future__ import annotations

import base64
import json
import socketserver
import threading
from pathlib import Path
from typing import Optional

from . import annotations as ann
from .config import ServiceConfig
from .mediator import Mediator, MediatorConfig, NotHolder, ProtocolError, UnknownSession
from .store import BadPath, NotFound, Workspace, is_text

OPS = {
    "open_session", "close_session", "read", "write", "refresh", "prune",
    "reserve_status", "release_reservation", "annotations", "stats", "sync_fs",
}


def _content_fields(content: bytes, prefix: str = "content") -> dict:
    if is_text(content):
        return {f"{prefix}_text": content.decode("utf-8")}
    return {f"{prefix}_b64": base64.b64encode(content).decode("ascii")}


def _decode_content(args: dict) -> bytes:
    if "content_text" in args:
        return args["content_text"].encode("utf-8")
    if "content_b64" in args:
        return base64.b64decode(args["content_b64"])
    raise KeyError("content_text or content_b64 required")


def _conflict_body(conflict, ttl: int) -> dict:
    body = {"kind": conflict.kind}
    body["stale"] = [
        {"path": p, "observed_version": o, "current_version": c}
        for p, o, c in conflict.stale]
    if conflict.target_diff is not None:
        body["target_diff"] = conflict.target_diff
    if conflict.current_target_content is not None:
        body.update(_content_fields(conflict.current_target_content, "current_content"))
    if conflict.reservation is not None:
        body["reservation"] = {"holder": conflict.reservation.holder,
                               "ttl_ms": conflict.reservation.ttl}
    if conflict.holder is not None:
        body["holder"] = conflict.holder
    if conflict.removed_annotations:
        body["removed_annotations"] = [
            {"author": a.author, "text": a.text, "line": a.line}
            for a in conflict.removed_annotations]
    return body


class ServiceCore:
    """Protocol dispatch, shared by the socket server and in-process tests."""

    def __init__(self, mediator: Mediator, workspace_root: Optional[Path] = None,
                 config: Optional[ServiceConfig] = None):
        self.mediator = mediator
        self.workspace_root = Path(workspace_root) if workspace_root else None
        self.config = config or ServiceConfig()

    def handle(self, envelope: dict) -> dict:
        request_id = envelope.get("request_id")
        op = envelope.get("op")
        if not isinstance(envelope, dict) or op is None:
            return self._err(request_id, "bad_request", "missing op")
        if op not in OPS:
            return self._err(request_id, "unknown_op", f"unknown op: {op}")
        try:
            body = self._dispatch(op, envelope.get("session_id"),
                                  envelope.get("args") or {})
        except NotFound as exc:
            return self._err(request_id, "not_found", str(exc))
        except (BadPath,) as exc:
            return self._err(request_id, "bad_path", str(exc))
        except (UnknownSession,) as exc:
            return self._err(request_id, "unknown_session", str(exc))
        except (NotHolder, ProtocolError) as exc:
            return self._err(request_id, "protocol", str(exc))
        except KeyError as exc:
            return self._err(request_id, "bad_request", f"missing field {exc}")
        return {"request_id": request_id, "status": "ok", "body": body}

    @staticmethod
    def _err(request_id, code: str, message: str, detail: Optional[dict] = None) -> dict:
        return {"request_id": request_id, "status": "err",
                "body": {"code": code, "message": message, "detail": detail or {}}}

    def _dispatch(self, op: str, session_id: Optional[str], args: dict) -> dict:
        m = self.mediator
        if op == "open_session":
            session = m.open_session(args["role"], author=args.get("name"))
            return {"session_id": session.session_id}
        if op == "close_session":
            m.close_session(session_id)
            return {}
        if op == "read":
            content, version = m.mediated_read(session_id, args["path"])
            body = _content_fields(content)
            body["version"] = version
            return body
        if op == "write":
            outcome = m.submit_write(
                session_id, args["path"], _decode_content(args)
                if not args.get("delete") else b"",
                expected_version=args.get("expected_version"),
                delete=bool(args.get("delete")))
            if outcome.accepted:
                return {"status": "accepted", "new_version": outcome.new_version}
            return {"status": "rejected",
                    "conflict": _conflict_body(outcome.conflict, self.config.ttl_ms)}
        if op == "refresh":
            entries = m.refresh_snapshot(session_id, args["paths"])
            return {"entries": entries}
        if op == "prune":
            m.prune_snapshot(session_id, args["paths"])
            return {}
        if op == "reserve_status":
            res = m.reservation_status(args["path"])
            if res is None:
                return {}
            remaining = res.granted_at + res.ttl - m.store.clock.now_ms()
            return {"holder": res.holder, "ttl_remaining_ms": max(0, remaining)}
        if op == "release_reservation":
            m.release_reservation(session_id, args["path"])
            return {}
        if op == "annotations":
            rec = m.store.get(args["path"])
            if not rec.text_kind:
                raise ProtocolError(f"{args['path']} is binary")
            prefix = ann.comment_prefix_for(rec.path, self.config.comment_prefix)
            found = ann.parse_annotations(rec.content.decode("utf-8"), prefix)
            return {"annotations": [
                {"author": a.author, "text": a.text, "line": a.line,
                 "anchor_hash": a.anchor_hash} for a in found]}
        if op == "stats":
            return {"counters": m.stats()}
        if op == "sync_fs":
            if self.workspace_root is None:
                raise ProtocolError("service has no backing directory")
            return {"changed": m.sync_fs(self.workspace_root)}
        raise AssertionError(op)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        core: ServiceCore = self.server.core  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                envelope = json.loads(line)
            except json.JSONDecodeError as exc:
                response = ServiceCore._err(None, "bad_request",
                                            f"malformed json: {exc}")
            else:
                response = core.handle(envelope)
            self.wfile.write((json.dumps(response) + "\n").encode("utf-8"))
            self.wfile.flush()


class CoordinationServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], core: ServiceCore):
        super().__init__(bind, _Handler)
        self.core = core
        self._sync_stop = threading.Event()
        self._sync_thread: Optional[threading.Thread] = None

    def start_sync_loop(self) -> None:
        interval = self.core.config.sync_interval
        if interval <= 0 or self.core.workspace_root is None:
            return

        def loop():
            while not self._sync_stop.wait(interval):
                self.core.mediator.sync_fs(self.core.workspace_root)

        self._sync_thread = threading.Thread(target=loop, daemon=True)
        self._sync_thread.start()

    def shutdown(self) -> None:
        self._sync_stop.set()
        super().shutdown()


def build_service(workspace_root: Path, config: Optional[ServiceConfig] = None,
                  event_log_path: Optional[Path] = None) -> ServiceCore:
    config = config or ServiceConfig()
    root = Path(workspace_root)
    if event_log_path is None:
        event_log_path = root.parent / (root.name + ".events.jsonl")
    store = Workspace.init_from_dir(root, event_log_path=event_log_path,
                                    write_through=True)
    mediator = Mediator(store, MediatorConfig(
        ttl=config.ttl_ms,
        annotation_policy=config.annotation_policy,
        comment_prefixes=config.comment_prefix))
    return ServiceCore(mediator, workspace_root=root, config=config)


def serve(workspace_root: Path, bind: tuple[str, int],
          config: Optional[ServiceConfig] = None,
          event_log_path: Optional[Path] = None) -> CoordinationServer:
    core = build_service(workspace_root, config, event_log_path)
    server = CoordinationServer(bind, core)
    server.start_sync_loop()
    return server
