"""Client for the coordination service's newline-delimited JSON protocol.

The client performs no validation of its own: every accept/reject decision is
made server-side, and the session mirror exists only to auto-fill
expected_version on writes. Transport failures raise TransportError; protocol
error responses raise ServiceError; conflict rejections are ordinary return
values, never exceptions.
"""

from __future__ import annotations

import base64
import json
import socket
from dataclasses import dataclass, field
from typing import Callable, Optional, Union


class ClientError(Exception):
    pass


class TransportError(ClientError):
    """Connection-level failure (refused, reset, malformed stream)."""


class ServiceError(ClientError):
    """An err-status response from the service."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass
class StaleEntry:
    path: str
    observed_version: int
    current_version: int


@dataclass
class Conflict:
    kind: str
    stale: list[StaleEntry]
    target_diff: Optional[str] = None
    current_content: Optional[Union[str, bytes]] = None
    reservation_holder: Optional[str] = None
    reservation_ttl_ms: Optional[int] = None
    holder: Optional[str] = None
    removed_annotations: list[dict] = field(default_factory=list)


@dataclass
class WriteResult:
    accepted: bool
    new_version: Optional[int] = None
    conflict: Optional[Conflict] = None


def _decode_body_content(body: dict, prefix: str = "content"):
    if f"{prefix}_text" in body:
        return body[f"{prefix}_text"]
    if f"{prefix}_b64" in body:
        return base64.b64decode(body[f"{prefix}_b64"])
    return None


def _parse_conflict(raw: dict) -> Conflict:
    reservation = raw.get("reservation") or {}
    return Conflict(
        kind=raw["kind"],
        stale=[StaleEntry(e["path"], e["observed_version"],
                          e["current_version"]) for e in raw.get("stale", [])],
        target_diff=raw.get("target_diff"),
        current_content=_decode_body_content(raw, "current_content"),
        reservation_holder=reservation.get("holder"),
        reservation_ttl_ms=reservation.get("ttl_ms"),
        holder=raw.get("holder"),
        removed_annotations=raw.get("removed_annotations", []),
    )


class ClientSession:
    """One session against a live coordination service.

    Not shareable across concurrent callers; use one per thread of control.
    """

    def __init__(self, sock: socket.socket, session_id: str):
        self._sock = sock
        self._reader = sock.makefile("r", encoding="utf-8")
        self.session_id = session_id
        self.mirror: dict[str, int] = {}
        self._next_id = 0

    # -- wire plumbing -----------------------------------------------------

    def _call(self, op: str, **args) -> dict:
        self._next_id += 1
        request = {"request_id": f"c{self._next_id}", "op": op,
                   "session_id": self.session_id, "args": args}
        try:
            self._sock.sendall((json.dumps(request) + "\n").encode("utf-8"))
            line = self._reader.readline()
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if not line:
            raise TransportError("connection closed by service")
        response = json.loads(line)
        if response.get("request_id") != request["request_id"]:
            raise TransportError("response out of order")
        if response["status"] == "err":
            body = response["body"]
            raise ServiceError(body["code"], body["message"])
        return response["body"]

    # -- operations --------------------------------------------------------

    def read(self, path: str):
        """Return (content, version); text files come back as str."""
        body = self._call("read", path=path)
        self.mirror[path] = body["version"]
        return _decode_body_content(body), body["version"]

    def write(self, path: str, content: Union[str, bytes, None] = None,
              delete: bool = False,
              expected_version: Optional[int] = None) -> WriteResult:
        """Submit a write; expected_version defaults to the mirror entry."""
        args: dict = {"path": path}
        if delete:
            args["delete"] = True
        elif isinstance(content, bytes):
            args["content_b64"] = base64.b64encode(content).decode("ascii")
        elif isinstance(content, str):
            args["content_text"] = content
        else:
            raise ClientError("content required unless delete=True")
        version = expected_version if expected_version is not None \
            else self.mirror.get(path)
        if version is not None:
            args["expected_version"] = version
        body = self._call("write", **args)
        if body["status"] == "accepted":
            self.mirror[path] = body["new_version"]
            return WriteResult(accepted=True, new_version=body["new_version"])
        return WriteResult(accepted=False,
                           conflict=_parse_conflict(body["conflict"]))

    def refresh(self, paths: list[str]) -> dict[str, Optional[int]]:
        entries = self._call("refresh", paths=paths)["entries"]
        for path, version in entries.items():
            if version is None:
                self.mirror.pop(path, None)
            else:
                self.mirror[path] = version
        return entries

    def prune(self, paths: list[str]) -> None:
        self._call("prune", paths=paths)
        for path in paths:
            self.mirror.pop(path, None)

    def reservation_status(self, path: str) -> Optional[dict]:
        body = self._call("reserve_status", path=path)
        return body or None

    def release_reservation(self, path: str) -> None:
        self._call("release_reservation", path=path)

    def annotations(self, path: str) -> list[dict]:
        return self._call("annotations", path=path)["annotations"]

    def stats(self) -> dict:
        return self._call("stats")["counters"]

    def write_with_retry(self, path: str,
                         content: Union[str, Callable[[Union[str, bytes]], str]],
                         max_retries: int = 2) -> WriteResult:
        """Refresh-and-retry convenience loop.

        content may be a constant or a function of the freshly read target
        content, so retries can rebuild the edit on the current version.
        Reservation_held rejections also count against max_retries.
        """
        attempt = 0
        while True:
            current, _ = self.read(path)
            text = content(current) if callable(content) else content
            result = self.write(path, text)
            if result.accepted or attempt >= max_retries:
                return result
            attempt += 1
            stale = [e.path for e in result.conflict.stale]
            if stale:
                self.refresh(stale)

    def close(self) -> None:
        try:
            self._call("close_session")
        except ClientError:
            pass
        finally:
            self._sock.close()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(address: tuple[str, int], role: str,
            name: Optional[str] = None, timeout: float = 10.0) -> ClientSession:
    """Open a session against a running service at (host, port)."""
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot reach service at {address}: {exc}") from exc
    sock.settimeout(timeout)
    # bootstrap request goes out before the session wrapper exists
    request = {"request_id": "c0", "op": "open_session", "session_id": None,
               "args": {"role": role, "name": name}}
    sock.sendall((json.dumps(request) + "\n").encode("utf-8"))
    reader = sock.makefile("r", encoding="utf-8")
    line = reader.readline()
    if not line:
        sock.close()
        raise TransportError("connection closed during open_session")
    response = json.loads(line)
    if response["status"] == "err":
        body = response["body"]
        sock.close()
        raise ServiceError(body["code"], body["message"])
    return ClientSession(sock, response["body"]["session_id"])
