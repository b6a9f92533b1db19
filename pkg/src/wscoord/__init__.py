"""Shared-workspace coordination: versioned store, write-time conflict
control, intent annotations, NDJSON service, and a strategy simulator."""

from .annotations import (IntentAnnotation, PreservationReport,
                          annotation_digest, check_preservation,
                          parse_annotations)
from .difftools import MergeResult, apply_patch, merge3, unified_diff
from .mediator import (ConflictReport, Mediator, MediatorConfig, NotHolder,
                       ProtocolError, Reservation, UnknownSession,
                       WriteOutcome, validate)
from .sessions import Session
from .store import (FileRecord, NotFound, PathCollision, StoreError, TickClock,
                    Workspace, is_text, normalize_path)

__all__ = [
    "ConflictReport", "FileRecord", "IntentAnnotation", "Mediator",
    "MediatorConfig", "MergeResult", "NotFound", "NotHolder", "PathCollision",
    "PreservationReport", "ProtocolError", "Reservation", "Session",
    "StoreError", "TickClock", "UnknownSession", "Workspace", "WriteOutcome",
    "annotation_digest", "apply_patch", "check_preservation", "is_text",
    "merge3", "normalize_path", "parse_annotations", "unified_diff",
    "validate",
]
