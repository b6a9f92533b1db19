"""Structured intent comments: parsing, indexing, preservation checks.

The convention is one comment line of the form ``<prefix> <author>: <text>``
sitting immediately above the block it describes. Whether a removed foreign
comment blocks a write is decided by the workspace policy (warn or strict).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

DEFAULT_COMMENT_PREFIXES = {
    ".py": "#",
    ".rs": "//",
    ".ts": "//",
    ".go": "//",
    ".cpp": "//",
    ".c": "//",
    ".js": "//",
    ".java": "//",
}

EMPTY_BLOCK = "<empty>"


class BinaryContent(Exception):
    pass


@dataclass(frozen=True)
class IntentAnnotation:
    author: str
    text: str
    line: int  # 1-based
    anchor_hash: str

    def key(self) -> tuple:
        return (self.author, self.text)


@dataclass
class PreservationReport:
    removed: list[IntentAnnotation] = field(default_factory=list)
    modified_blocks: list[IntentAnnotation] = field(default_factory=list)
    policy_applied: str = "warn"

    @property
    def clean(self) -> bool:
        return not self.removed and not self.modified_blocks


def comment_prefix_for(path: str, prefixes: dict | None = None) -> str:
    prefixes = prefixes or DEFAULT_COMMENT_PREFIXES
    for ext, prefix in prefixes.items():
        if path.endswith(ext):
            return prefix
    return "#"


def _anchor_hash(lines: list[str], idx: int, prefix: str) -> str:
    """Hash of the first non-comment non-blank line below lines[idx]."""
    for line in lines[idx + 1:]:
        stripped = line.strip()
        if not stripped or stripped.startswith(prefix):
            continue
        return hashlib.sha1(stripped.encode("utf-8")).hexdigest()[:12]
    return EMPTY_BLOCK


def parse_annotations(content: str, comment_prefix: str = "#") -> list[IntentAnnotation]:
    pattern = re.compile(
        r"^\s*" + re.escape(comment_prefix) + r" (\S+): (.*)$")
    lines = content.splitlines()
    found = []
    for i, line in enumerate(lines):
        m = pattern.match(line)
        if m:
            found.append(IntentAnnotation(
                author=m.group(1), text=m.group(2), line=i + 1,
                anchor_hash=_anchor_hash(lines, i, comment_prefix)))
    return found


def render_annotation(ann: IntentAnnotation, comment_prefix: str = "#") -> str:
    return f"{comment_prefix} {ann.author}: {ann.text}"


def check_preservation(old_content: str, new_content: str, writer_author: str,
                       policy: str = "warn",
                       comment_prefix: str = "#") -> PreservationReport:
    """Foreign annotations removed or with changed anchored blocks.

    Matching is on (author, text); duplicates are paired by anchor_hash so a
    pure line move is never flagged.
    """
    old_anns = [a for a in parse_annotations(old_content, comment_prefix)
                if a.author != writer_author]
    new_anns = parse_annotations(new_content, comment_prefix)
    report = PreservationReport(policy_applied=policy)
    remaining = list(new_anns)
    for ann in old_anns:
        exact = [a for a in remaining
                 if a.key() == ann.key() and a.anchor_hash == ann.anchor_hash]
        if exact:
            remaining.remove(exact[0])
            continue
        same_text = [a for a in remaining if a.key() == ann.key()]
        if same_text:
            remaining.remove(same_text[0])
            report.modified_blocks.append(ann)
        else:
            report.removed.append(ann)
    return report


def annotation_digest(contents: dict[str, str],
                      prefixes: dict | None = None) -> dict[str, dict[str, int]]:
    """Per-file per-author annotation counts over text contents."""
    digest: dict[str, dict[str, int]] = {}
    for path, content in contents.items():
        counts: dict[str, int] = {}
        for ann in parse_annotations(content, comment_prefix_for(path, prefixes)):
            counts[ann.author] = counts.get(ann.author, 0) + 1
        digest[path] = counts
    return digest
