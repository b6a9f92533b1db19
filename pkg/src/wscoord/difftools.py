"""Line-based unified diff, patch application, and three-way merge."""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

NO_NEWLINE = "\\ No newline at end of file"


class DiffUnavailable(Exception):
    """Raised when a diff is requested for binary content."""


class PatchError(Exception):
    pass


def _lines(text: str) -> list[str]:
    # split on '\n' only; str.splitlines also breaks on \x0b, \x1e, u2028, ...
    if not text:
        return []
    parts = text.split("\n")
    out = [p + "\n" for p in parts[:-1]]
    if parts[-1]:
        out.append(parts[-1])
    return out


def unified_diff(old: str, new: str, from_name: str = "a", to_name: str = "b",
                 context: int = 3) -> str:
    """Unified diff with the git-style no-trailing-newline marker, so that
    apply_patch(old, diff) reproduces new byte-for-byte."""
    if old == new:
        return ""
    a, b = _lines(old), _lines(new)
    out = [f"--- {from_name}\n", f"+++ {to_name}\n"]
    matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    for group in matcher.get_grouped_opcodes(context):
        a1, a2 = group[0][1], group[-1][2]
        b1, b2 = group[0][3], group[-1][4]
        out.append(f"@@ -{_range(a1, a2)} +{_range(b1, b2)} @@\n")
        for tag, i1, i2, j1, j2 in group:
            if tag in ("equal", "replace", "delete"):
                prefix = " " if tag == "equal" else "-"
                for line in a[i1:i2]:
                    out.extend(_emit(prefix, line))
            if tag in ("replace", "insert"):
                for line in b[j1:j2]:
                    out.extend(_emit("+", line))
            if tag == "equal":
                continue
    return "".join(out)


def _range(lo: int, hi: int) -> str:
    n = hi - lo
    start = lo + 1 if n > 0 else lo
    return f"{start}" if n == 1 else f"{start},{n}"


def _emit(prefix: str, line: str) -> list[str]:
    if line.endswith("\n"):
        return [prefix + line]
    return [prefix + line + "\n", NO_NEWLINE + "\n"]


@dataclass
class _Hunk:
    old_start: int
    old_count: int
    removed: list[str] = field(default_factory=list)
    added: list[str] = field(default_factory=list)
    ops: list[tuple[str, str]] = field(default_factory=list)  # (' '|'-'|'+', line)


def _parse(diff: str) -> list[_Hunk]:
    hunks: list[_Hunk] = []
    lines = _lines(diff)
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("@@"):
            header = line.split("@@")[1].strip()
            old_part = header.split(" ")[0]
            assert old_part.startswith("-")
            bits = old_part[1:].split(",")
            start = int(bits[0])
            count = int(bits[1]) if len(bits) > 1 else 1
            hunk = _Hunk(old_start=start if count else start + 1, old_count=count)
            hunks.append(hunk)
            i += 1
            while i < len(lines) and lines[i][:1] in (" ", "-", "+", "\\"):
                body = lines[i]
                if body.startswith(NO_NEWLINE):
                    if hunk.ops:
                        op, content = hunk.ops[-1]
                        hunk.ops[-1] = (op, content.rstrip("\n"))
                else:
                    hunk.ops.append((body[0], body[1:]))
                i += 1
        else:
            i += 1
    return hunks


def apply_patch(old: str, diff: str) -> str:
    """Apply a unified diff produced by unified_diff to old text."""
    if not diff:
        return old
    a = _lines(old)
    out: list[str] = []
    pos = 0  # index into a
    for hunk in _parse(diff):
        anchor = hunk.old_start - 1
        if anchor < pos:
            raise PatchError("overlapping hunks")
        out.extend(a[pos:anchor])
        pos = anchor
        for op, content in hunk.ops:
            if op == " ":
                if pos >= len(a) or a[pos] != content:
                    raise PatchError(f"context mismatch at line {pos + 1}")
                out.append(content)
                pos += 1
            elif op == "-":
                if pos >= len(a) or a[pos] != content:
                    raise PatchError(f"removal mismatch at line {pos + 1}")
                pos += 1
            elif op == "+":
                out.append(content)
    out.extend(a[pos:])
    return "".join(out)


# -- three-way merge ---------------------------------------------------------

@dataclass
class MergeResult:
    text: str
    conflicts: int
    conflict_regions: list[tuple[int, int]] = field(default_factory=list)


def merge3(base: str, ours: str, theirs: str,
           ours_label: str = "ours", theirs_label: str = "theirs",
           resolve: str = "markers") -> MergeResult:
    """Line-based diff3 merge.

    Changes on one side only are taken; identical changes on both sides merge
    cleanly; differing overlapping changes are conflicts. resolve is one of
    'markers' (emit conflict markers) or 'ours' (take ours, still counting the
    conflict).
    """
    b, o, t = _lines(base), _lines(ours), _lines(theirs)
    regions = _diff3_regions(b, o, t)
    out: list[str] = []
    conflicts = 0
    conflict_regions: list[tuple[int, int]] = []
    for kind, *span in regions:
        if kind == "unchanged":
            lo, hi = span
            out.extend(b[lo:hi])
        elif kind == "ours":
            lo, hi = span
            out.extend(o[lo:hi])
        elif kind == "theirs":
            lo, hi = span
            out.extend(t[lo:hi])
        elif kind == "agree":
            lo, hi = span
            out.extend(o[lo:hi])
        else:  # conflict: (o_lo, o_hi, t_lo, t_hi, b_lo, b_hi)
            o_lo, o_hi, t_lo, t_hi, b_lo, b_hi = span
            conflicts += 1
            conflict_regions.append((b_lo, b_hi))
            if resolve == "ours":
                out.extend(o[o_lo:o_hi])
            else:
                out.append(f"<<<<<<< {ours_label}\n")
                out.extend(o[o_lo:o_hi])
                out.append("=======\n")
                out.extend(t[t_lo:t_hi])
                out.append(f">>>>>>> {theirs_label}\n")
    return MergeResult("".join(out), conflicts, conflict_regions)


def _sync_regions(base: list[str], a: list[str], b: list[str]):
    """Regions where both sides match the same stretch of base lines.

    Each region is (base_lo, base_hi, a_lo, a_hi, b_lo, b_hi); a trailing
    zero-length sentinel anchors the ends of all three sequences.
    """
    am = difflib.SequenceMatcher(a=base, b=a, autojunk=False).get_matching_blocks()
    bm = difflib.SequenceMatcher(a=base, b=b, autojunk=False).get_matching_blocks()
    regions = []
    ia = ib = 0
    while ia < len(am) and ib < len(bm):
        abase, amatch, alen = am[ia]
        bbase, bmatch, blen = bm[ib]
        lo = max(abase, bbase)
        hi = min(abase + alen, bbase + blen)
        if hi > lo:
            a_lo = amatch + (lo - abase)
            b_lo = bmatch + (lo - bbase)
            regions.append((lo, hi, a_lo, a_lo + (hi - lo), b_lo, b_lo + (hi - lo)))
        if abase + alen < bbase + blen:
            ia += 1
        else:
            ib += 1
    regions.append((len(base), len(base), len(a), len(a), len(b), len(b)))
    return regions


def _diff3_regions(b: list[str], o: list[str], t: list[str]):
    regions = []
    b_pos = o_pos = t_pos = 0
    for zb, ze, zo, zoe, zt, zte in _sync_regions(b, o, t):
        base_slice = b[b_pos:zb]
        ours_slice = o[o_pos:zo]
        theirs_slice = t[t_pos:zt]
        if base_slice or ours_slice or theirs_slice:
            ours_changed = ours_slice != base_slice
            theirs_changed = theirs_slice != base_slice
            if ours_changed and theirs_changed:
                if ours_slice == theirs_slice:
                    regions.append(("agree", o_pos, zo))
                else:
                    regions.append(("conflict", o_pos, zo, t_pos, zt, b_pos, zb))
            elif ours_changed:
                regions.append(("ours", o_pos, zo))
            elif theirs_changed:
                regions.append(("theirs", t_pos, zt))
            else:
                regions.append(("unchanged", b_pos, zb))
        if ze > zb:
            regions.append(("unchanged", zb, ze))
        b_pos, o_pos, t_pos = ze, zoe, zte
    return regions
