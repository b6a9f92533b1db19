"""Deterministic tick-driven execution of scripted workloads.

Concurrency is modeled logically: each tick exactly one ready agent performs
one action, chosen uniformly by a seeded RNG, so identical (workload, mode,
seed) triples produce identical event logs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..mediator import Mediator, MediatorConfig, ProtocolError
from ..difftools import merge3
from ..replay import replay
from ..store import EventLog, TickClock, Workspace
from .metrics import RunMetrics, coupling_score, pairwise_overlap
from .workload import Workload, build_content

MAX_RESERVATION_WAITS = 200


@dataclass
class SimResult:
    final_contents: dict[str, str]
    metrics: RunMetrics
    events: list[dict]
    event_log_text: str


@dataclass
class _Agent:
    task: object
    pc: int = 0
    busy_until: int = 0
    retries_on_step: int = 0
    waits_on_step: int = 0
    failed_steps: int = 0
    session_id: Optional[str] = None
    cache: dict = field(default_factory=dict)   # path -> text content
    mirror: dict = field(default_factory=dict)  # path -> observed version
    access: set = field(default_factory=set)

    @property
    def done(self) -> bool:
        return self.pc >= len(self.task.script)

    def ready(self, tick: int) -> bool:
        return not self.done and tick >= self.busy_until


def run_workload(workload: Workload, mode: Optional[str] = None,
                 seed: Optional[int] = None) -> SimResult:
    mode = mode or workload.mode
    seed = workload.seed if seed is None else seed
    workload.validate()
    if mode == "worktree_merge":
        return _run_worktree(workload, seed)
    return _run_shared(workload, mode, seed)


# -- shared workspace (mediated or soft) ------------------------------------

def _run_shared(workload: Workload, mode: str, seed: int) -> SimResult:
    clock = TickClock()
    store = Workspace.init_from_contents(
        {p: c.encode("utf-8") for p, c in sorted(workload.initial_files.items())},
        clock=clock)
    soft = mode == "soft_isolation"
    mediator = Mediator(store, MediatorConfig(
        ttl=workload.ttl_ticks,
        reservations_enabled=workload.reservations and not soft,
        validation_enabled=not soft,
        annotation_policy=workload.annotation_policy))

    agents = {t.task_id: _Agent(task=t) for t in workload.tasks}
    for task_id in sorted(agents):
        agent = agents[task_id]
        agent.session_id = mediator.open_session(
            "engineer", author=agent.task.engineer_id).session_id

    metrics = RunMetrics(workload=workload.name, mode=mode, seed=seed,
                         tasks=len(workload.tasks))
    rng = random.Random(seed)

    for tick in range(1, workload.max_ticks + 1):
        clock.tick = tick
        ready = [tid for tid in sorted(agents) if agents[tid].ready(tick)]
        if not ready:
            if all(a.done for a in agents.values()):
                break
            continue
        tid = rng.choice(ready)
        _exec_step(agents[tid], mediator, workload, metrics, tick, seed)

    for task_id in sorted(agents):
        mediator.close_session(agents[task_id].session_id)

    for task_id, agent in agents.items():
        metrics.observed_access_sets[task_id] = agent.access
    metrics.tasks_completed = sum(
        1 for a in agents.values() if a.done and a.failed_steps == 0)
    _finalize(metrics, workload)

    state = replay(store.log.events)
    metrics.lost_updates = sum(
        1 for _, _, _, prior, _, observed in state.accepted_writes
        if observed is not None and observed < prior)

    final = {p: store.files[p].content.decode("utf-8")
             for p in store.live_paths()}
    return SimResult(final, metrics, store.log.events, store.log.dump())


def _exec_step(agent: _Agent, mediator: Mediator, workload: Workload,
               metrics: RunMetrics, tick: int, seed: int) -> None:
    step = agent.task.script[agent.pc]
    sid = agent.session_id
    if step.kind == "think":
        agent.busy_until = tick + step.duration_ticks
        agent.pc += 1
        return
    if step.kind == "read":
        content, version = mediator.mediated_read(sid, step.path)
        agent.cache[step.path] = content.decode("utf-8")
        agent.mirror[step.path] = version
        agent.access.add(step.path)
        agent.pc += 1
        return
    if step.kind == "refresh":
        entries = mediator.refresh_snapshot(sid, step.paths)
        for path, version in entries.items():
            if version is not None:
                agent.mirror[path] = version
        agent.pc += 1
        return
    if step.kind == "prune":
        mediator.prune_snapshot(sid, step.paths)
        for path in step.paths:
            agent.mirror.pop(path, None)
        agent.pc += 1
        return

    # write
    path = step.path
    base = agent.cache.get(path, "")
    content = build_content(step.content_rule, base, agent.task.task_id,
                            agent.pc, seed)
    metrics.write_attempts += 1
    try:
        outcome = mediator.submit_write(
            sid, path, content.encode("utf-8"),
            expected_version=agent.mirror.get(path))
    except ProtocolError:
        agent.failed_steps += 1
        agent.pc += 1
        return

    if outcome.accepted:
        metrics.accepted += 1
        agent.mirror[path] = outcome.new_version
        agent.cache[path] = content
        agent.access.add(path)
        if agent.retries_on_step:
            metrics.retries_to_converge[path] = max(
                metrics.retries_to_converge.get(path, 0), agent.retries_on_step)
        agent.retries_on_step = 0
        agent.waits_on_step = 0
        agent.pc += 1
        return

    conflict = outcome.conflict
    if conflict.kind == "reservation_held":
        agent.waits_on_step += 1
        agent.busy_until = tick + 1
        if agent.waits_on_step > MAX_RESERVATION_WAITS:
            agent.failed_steps += 1
            agent.pc += 1
        return

    metrics.pre_commit_conflicts += 1
    agent.retries_on_step += 1
    if (step.retry.on_reject == "refresh_and_retry"
            and agent.retries_on_step <= step.retry.max_retries):
        stale_paths = sorted({p for p, _, _ in conflict.stale} | {path})
        entries = mediator.refresh_snapshot(sid, stale_paths)
        for p, version in entries.items():
            if version is not None:
                agent.mirror[p] = version
        if conflict.current_target_content is not None:
            agent.cache[path] = conflict.current_target_content.decode("utf-8")
        agent.busy_until = tick + 1
        return
    metrics.retries_to_converge[path] = max(
        metrics.retries_to_converge.get(path, 0), agent.retries_on_step)
    agent.failed_steps += 1
    agent.retries_on_step = 0
    agent.pc += 1


# -- worktree isolation with end-of-run merge -------------------------------

def _run_worktree(workload: Workload, seed: int) -> SimResult:
    clock = TickClock()
    log = EventLog(clock)
    base = dict(sorted(workload.initial_files.items()))
    agents = {t.task_id: _Agent(task=t) for t in workload.tasks}
    versions = {tid: {p: 1 for p in base} for tid in agents}
    copies = {tid: dict(base) for tid in agents}

    metrics = RunMetrics(workload=workload.name, mode="worktree_merge",
                         seed=seed, tasks=len(workload.tasks))
    rng = random.Random(seed)

    for tick in range(1, workload.max_ticks + 1):
        clock.tick = tick
        ready = [tid for tid in sorted(agents) if agents[tid].ready(tick)]
        if not ready:
            if all(a.done for a in agents.values()):
                break
            continue
        tid = rng.choice(ready)
        agent = agents[tid]
        step = agent.task.script[agent.pc]
        eng = agent.task.engineer_id
        if step.kind == "think":
            agent.busy_until = tick + step.duration_ticks
        elif step.kind == "read":
            if step.path in copies[tid]:
                log.append("read", eng, step.path,
                           {"version": versions[tid].get(step.path, 1)})
                agent.cache[step.path] = copies[tid][step.path]
                agent.access.add(step.path)
        elif step.kind in ("refresh", "prune"):
            pass  # private copy: nothing to refresh
        elif step.kind == "write":
            import base64 as _b64
            content = build_content(step.content_rule,
                                    copies[tid].get(step.path, ""),
                                    tid, agent.pc, seed)
            prior = versions[tid].get(step.path, 0)
            versions[tid][step.path] = prior + 1
            copies[tid][step.path] = content
            agent.access.add(step.path)
            metrics.write_attempts += 1
            metrics.accepted += 1
            log.append("write_accepted", eng, step.path, {
                "prior_version": prior, "new_version": prior + 1,
                "created": prior == 0,
                "content_b64": _b64.b64encode(content.encode("utf-8")).decode("ascii"),
            })
        agent.pc += 1

    # integrate: per-file three-way merge, base = initial content
    final = dict(base)
    all_paths = sorted(set(base) | {p for c in copies.values() for p in c})
    for path in all_paths:
        base_text = base.get(path, "")
        changed = [(tid, copies[tid][path]) for tid in sorted(copies)
                   if copies[tid].get(path, base_text) != base_text]
        if not changed:
            continue
        merged = changed[0][1]
        for _, theirs in changed[1:]:
            result = merge3(base_text, merged, theirs, resolve="ours")
            metrics.post_commit_conflicts += result.conflicts
            merged = result.text
        final[path] = merged

    for tid, agent in agents.items():
        metrics.observed_access_sets[tid] = agent.access
    metrics.tasks_completed = sum(
        1 for a in agents.values() if a.done and a.failed_steps == 0)
    _finalize(metrics, workload)
    return SimResult(final, metrics, log.events, log.dump())


def _finalize(metrics: RunMetrics, workload: Workload) -> None:
    primary = {t.task_id: set(t.primary_files) for t in workload.tasks}
    metrics.first_round_overlap = pairwise_overlap(metrics.observed_access_sets)
    rejected = metrics.write_attempts - metrics.accepted
    metrics.coupling, metrics.coupling_stratum = coupling_score(
        metrics.observed_access_sets, primary, metrics.write_attempts, rejected)
