"""Workload files: scripted pseudo-agent tasks over an initial file tree.

Schema (JSON object):
    name            str
    initial_files   {path: text}
    mode            one of MODES (default for runs; overridable per run)
    seed            int, default rng seed
    ttl_ticks       int, reservation lifetime in scheduler ticks (default 10)
    reservations    bool (default true)
    annotation_policy  "warn" | "strict"
    max_ticks       int safety cap (default 10000)
    tasks           list of:
        task_id       str (unique)
        engineer_id   str (one simulated session per task)
        primary_files list[str] -- ownership declarations; disjoint across
                      tasks (validated)
        retry         {"max_retries": int, "on_reject": "refresh_and_retry"
                      | "give_up"}
        script        list of steps:
            kind          one of STEP_KINDS
            path / paths  target(s) for read/write/refresh/prune
            duration_ticks  for think steps
            content_rule  {"id": "replace" | "append_line" | "edit_region"
                          | "annotated_edit", "params": {...}}; content is a
                          pure function of (task_id, step index, seed) so
                          rebuilt retries are reproducible
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

MODES = ("shared_occ", "worktree_merge", "soft_isolation")
STEP_KINDS = ("read", "write", "think", "refresh", "prune")


class WorkloadError(Exception):
    pass


@dataclass
class RetryPolicy:
    max_retries: int = 0
    on_reject: str = "give_up"  # refresh_and_retry | give_up


@dataclass
class SimStep:
    kind: str
    path: Optional[str] = None
    paths: list[str] = field(default_factory=list)  # refresh/prune
    content_rule: Optional[dict] = None  # {"id": ..., "params": {...}}
    duration_ticks: int = 1
    retry: RetryPolicy = field(default_factory=RetryPolicy)


@dataclass
class TaskAssignment:
    task_id: str
    engineer_id: str
    primary_files: list[str]
    script: list[SimStep]


@dataclass
class Workload:
    name: str
    initial_files: dict[str, str]
    tasks: list[TaskAssignment]
    mode: str = "shared_occ"
    seed: int = 0
    ttl_ticks: int = 10
    reservations: bool = True
    annotation_policy: str = "warn"
    max_ticks: int = 10_000

    def validate(self) -> None:
        if self.mode not in MODES:
            raise WorkloadError(f"unknown mode: {self.mode}")
        seen: dict[str, str] = {}
        for task in self.tasks:
            for path in task.primary_files:
                if path in seen and seen[path] != task.task_id:
                    raise WorkloadError(
                        f"primary file {path!r} assigned to both "
                        f"{seen[path]} and {task.task_id}")
                seen[path] = task.task_id
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise WorkloadError("duplicate task_id")
        for task in self.tasks:
            for step in task.script:
                if step.kind not in STEP_KINDS:
                    raise WorkloadError(f"unknown step kind: {step.kind}")
                if step.kind == "write" and step.content_rule is None:
                    raise WorkloadError(f"write step without content_rule "
                                        f"in {task.task_id}")
                if step.kind == "write" and step.content_rule["id"] not in CONTENT_RULES:
                    raise WorkloadError(
                        f"unknown content_rule: {step.content_rule['id']}")
                if step.retry.max_retries < 0 or step.duration_ticks < 1:
                    raise WorkloadError(f"bad step bounds in {task.task_id}")


def _parse_step(raw: dict) -> SimStep:
    retry_raw = raw.get("retry") or {}
    return SimStep(
        kind=raw["kind"],
        path=raw.get("path"),
        paths=list(raw.get("paths", [])),
        content_rule=raw.get("content_rule"),
        duration_ticks=int(raw.get("ticks", 1)),
        retry=RetryPolicy(max_retries=int(retry_raw.get("max_retries", 0)),
                          on_reject=retry_raw.get("on_reject", "give_up")))


def load_workload(path: Path) -> Workload:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return workload_from_dict(raw)


def workload_from_dict(raw: dict) -> Workload:
    try:
        wl = Workload(
            name=raw.get("name", "workload"),
            initial_files=dict(raw.get("initial_files", {})),
            tasks=[TaskAssignment(
                task_id=t["task_id"],
                engineer_id=t["engineer_id"],
                primary_files=list(t.get("primary_files", [])),
                script=[_parse_step(s) for s in t["script"]],
            ) for t in raw.get("tasks", [])],
            mode=raw.get("mode", "shared_occ"),
            seed=int(raw.get("seed", 0)),
            ttl_ticks=int(raw.get("ttl_ticks", 10)),
            reservations=bool(raw.get("reservations", True)),
            annotation_policy=raw.get("annotation_policy", "warn"),
            max_ticks=int(raw.get("max_ticks", 10_000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise WorkloadError(f"malformed workload: {exc}") from exc
    wl.validate()
    return wl


# -- deterministic content generators ---------------------------------------

def _gen_line(task_id: str, step_index: int, seed: int, i: int) -> str:
    return f"{task_id} step{step_index} seed{seed} line{i}\n"


def _rule_replace(base: str, params: dict, task_id: str, step_index: int,
                  seed: int) -> str:
    return params["text"]


def _rule_append_line(base: str, params: dict, task_id: str, step_index: int,
                      seed: int) -> str:
    line = params.get("line") or _gen_line(task_id, step_index, seed, 0).rstrip("\n")
    if base and not base.endswith("\n"):
        base += "\n"
    return base + line + "\n"


def _rule_edit_region(base: str, params: dict, task_id: str, step_index: int,
                      seed: int) -> str:
    """Replace lines [start, start+count) (0-based) with explicit or
    generated lines."""
    start = int(params["start"])
    count = int(params.get("count", 1))
    lines = base.splitlines(keepends=True)
    if "lines" in params:
        new = [l if l.endswith("\n") else l + "\n" for l in params["lines"]]
    else:
        new = [_gen_line(task_id, step_index, seed, i) for i in range(count)]
    return "".join(lines[:start] + new + lines[start + count:])


def _rule_annotated_edit(base: str, params: dict, task_id: str, step_index: int,
                         seed: int) -> str:
    """edit_region plus an intent comment line above the edited block."""
    author = params.get("author", task_id)
    intent = params.get("intent", f"step {step_index}")
    inner = dict(params)
    text = _rule_edit_region(base, inner, task_id, step_index, seed)
    lines = text.splitlines(keepends=True)
    start = int(params["start"])
    lines.insert(start, f"# {author}: {intent}\n")
    return "".join(lines)


CONTENT_RULES = {
    "replace": _rule_replace,
    "append_line": _rule_append_line,
    "edit_region": _rule_edit_region,
    "annotated_edit": _rule_annotated_edit,
}


def build_content(rule: dict, base: str, task_id: str, step_index: int,
                  seed: int) -> str:
    fn = CONTENT_RULES[rule["id"]]
    return fn(base, rule.get("params", {}), task_id, step_index, seed)
