"""Service configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .annotations import DEFAULT_COMMENT_PREFIXES

BIND_ENV_VAR = "WSCOORD_BIND"
DEFAULT_BIND = "127.0.0.1:7420"


@dataclass
class ServiceConfig:
    ttl_ms: int = 30_000
    annotation_policy: str = "warn"  # warn | strict
    comment_prefix: dict = field(default_factory=lambda: dict(DEFAULT_COMMENT_PREFIXES))
    sync_interval: float = 0.0  # seconds between out-of-band scans; 0 disables

    @classmethod
    def load(cls, path: Optional[Path]) -> "ServiceConfig":
        if path is None:
            return cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls()
        if "ttl_ms" in raw:
            cfg.ttl_ms = int(raw["ttl_ms"])
        if "annotation_policy" in raw:
            if raw["annotation_policy"] not in ("warn", "strict"):
                raise ValueError(f"bad annotation_policy: {raw['annotation_policy']}")
            cfg.annotation_policy = raw["annotation_policy"]
        if "comment_prefix" in raw:
            cfg.comment_prefix.update(raw["comment_prefix"])
        if "sync_interval" in raw:
            cfg.sync_interval = float(raw["sync_interval"])
        return cfg
