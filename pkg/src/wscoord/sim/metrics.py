"""Run metrics: conflict accounting, coupling score, CSV report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

CSV_COLUMNS = [
    "workload", "mode", "seed", "tasks", "write_attempts", "accepted",
    "acceptance_rate", "pre_commit_conflicts", "post_commit_conflicts",
    "first_round_overlap", "coupling_score", "coupling_stratum",
    "lost_updates", "tasks_completed", "retries_to_converge",
]


@dataclass
class RunMetrics:
    workload: str
    mode: str
    seed: int
    tasks: int
    write_attempts: int = 0
    accepted: int = 0
    pre_commit_conflicts: int = 0
    post_commit_conflicts: int = 0
    observed_access_sets: dict[str, set] = field(default_factory=dict)
    first_round_overlap: float = 0.0
    coupling: float = 0.0
    coupling_stratum: str = "low"
    lost_updates: int = 0
    tasks_completed: int = 0
    # contested path -> max retries any task needed before acceptance
    retries_to_converge: dict[str, int] = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.write_attempts if self.write_attempts else 0.0

    def row(self) -> dict:
        retries = ";".join(f"{p}={n}" for p, n in
                           sorted(self.retries_to_converge.items()))
        return {
            "workload": self.workload,
            "mode": self.mode,
            "seed": self.seed,
            "tasks": self.tasks,
            "write_attempts": self.write_attempts,
            "accepted": self.accepted,
            "acceptance_rate": f"{self.acceptance_rate:.4f}",
            "pre_commit_conflicts": self.pre_commit_conflicts,
            "post_commit_conflicts": self.post_commit_conflicts,
            "first_round_overlap": f"{self.first_round_overlap:.4f}",
            "coupling_score": f"{self.coupling:.4f}",
            "coupling_stratum": self.coupling_stratum,
            "lost_updates": self.lost_updates,
            "tasks_completed": self.tasks_completed,
            "retries_to_converge": retries,
        }


def pairwise_overlap(access_sets: dict[str, set]) -> float:
    """Fraction of task pairs with intersecting access sets; 0 when there
    are no pairs."""
    ids = sorted(access_sets)
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    if not pairs:
        return 0.0
    hits = sum(1 for a, b in pairs if access_sets[a] & access_sets[b])
    return hits / len(pairs)


def coupling_score(access_sets: dict[str, set],
                   primary_files: dict[str, set],
                   write_attempts: int,
                   rejected: int) -> tuple[float, str]:
    """Mean of four signals in [0,1]: pairwise access overlap, foreign-file
    reads, multi-file scope, and rejection rate."""
    n = len(access_sets) or 1
    overlap = pairwise_overlap(access_sets)
    dependency = sum(
        1 for t, acc in access_sets.items()
        if acc - primary_files.get(t, set())) / n
    multi_file = sum(1 for f in primary_files.values() if len(f) > 1) / max(
        1, len(primary_files))
    rejection = rejected / max(1, write_attempts)
    score = (overlap + dependency + multi_file + rejection) / 4.0
    if score < 0.25:
        stratum = "low"
    elif score < 0.5:
        stratum = "medium"
    else:
        stratum = "high"
    return score, stratum


def report(metrics_list: list[RunMetrics]) -> str:
    """CSV rows in fixed column order plus per-mode/stratum summary lines."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for metrics in metrics_list:
        writer.writerow(metrics.row())
    return buf.getvalue()


def summarize(metrics_list: list[RunMetrics]) -> str:
    groups: dict[tuple[str, str], list[RunMetrics]] = {}
    for m in metrics_list:
        groups.setdefault((m.mode, m.coupling_stratum), []).append(m)
    lines = []
    for (mode, stratum), ms in sorted(groups.items()):
        acc = sum(m.accepted for m in ms)
        att = sum(m.write_attempts for m in ms)
        lines.append(
            f"{mode}/{stratum}: runs={len(ms)} "
            f"acceptance={acc / att if att else 0.0:.3f} "
            f"pre_commit={sum(m.pre_commit_conflicts for m in ms)} "
            f"post_commit={sum(m.post_commit_conflicts for m in ms)} "
            f"lost_updates={sum(m.lost_updates for m in ms)}")
    return "\n".join(lines)
