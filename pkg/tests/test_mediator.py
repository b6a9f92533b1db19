import random

import hypothesis.strategies as st
import pytest
from hypothesis import given, settings

from wscoord.mediator import (Mediator, MediatorConfig, NotHolder,
                              ProtocolError, validate)
from wscoord.store import NotFound, TickClock, Workspace


def make(files=None, **config_kwargs):
    files = files if files is not None else {
        "f.py": b"f = 1\n", "g.py": b"g = 1\n"}
    clock = TickClock()
    store = Workspace.init_from_contents(files, clock=clock)
    mediator = Mediator(store, MediatorConfig(ttl=10, **config_kwargs))
    return mediator, clock


# -- sessions and snapshots --------------------------------------------------

def test_open_session_empty_snapshot():
    m, _ = make()
    s = m.open_session("engineer")
    assert s.snapshot == {}
    assert m.store.log.events[-1]["kind"] == "session_opened"


def test_distinct_session_ids():
    m, _ = make()
    assert m.open_session("engineer").session_id != \
        m.open_session("manager").session_id


def test_read_records_observation():
    m, _ = make()
    s = m.open_session("engineer")
    content, version = m.mediated_read(s.session_id, "f.py")
    assert (content, version) == (b"f = 1\n", 1)
    assert s.snapshot == {"f.py": 1}


def test_read_not_found_leaves_snapshot():
    m, _ = make()
    s = m.open_session("engineer")
    with pytest.raises(NotFound):
        m.mediated_read(s.session_id, "missing.py")
    assert s.snapshot == {}


def test_reread_overwrites_observation():
    m, _ = make()
    s1 = m.open_session("engineer")
    s2 = m.open_session("engineer")
    m.mediated_read(s1.session_id, "f.py")
    m.mediated_read(s2.session_id, "f.py")
    m.submit_write(s2.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.mediated_read(s1.session_id, "f.py")
    assert s1.snapshot["f.py"] == 2


def test_read_idempotent():
    m, _ = make()
    s = m.open_session("engineer")
    first = m.mediated_read(s.session_id, "f.py")
    second = m.mediated_read(s.session_id, "f.py")
    assert first == second


def test_refresh_updates_entries():
    m, _ = make()
    s1 = m.open_session("engineer")
    s2 = m.open_session("engineer")
    m.mediated_read(s1.session_id, "g.py")
    m.mediated_read(s2.session_id, "g.py")
    m.submit_write(s2.session_id, "g.py", b"g = 2\n", expected_version=1)
    result = m.refresh_snapshot(s1.session_id, ["g.py"])
    assert result == {"g.py": 2}
    assert s1.snapshot["g.py"] == 2


def test_refresh_current_entry_is_noop():
    m, _ = make()
    s = m.open_session("engineer")
    m.mediated_read(s.session_id, "f.py")
    assert m.refresh_snapshot(s.session_id, ["f.py"]) == {"f.py": 1}


def test_refresh_partial_on_missing_path():
    m, _ = make()
    s = m.open_session("engineer")
    result = m.refresh_snapshot(s.session_id, ["f.py", "gone.py"])
    assert result == {"f.py": 1, "gone.py": None}


def test_prune_unknown_path_noop():
    m, _ = make()
    s = m.open_session("engineer")
    m.mediated_read(s.session_id, "f.py")
    m.prune_snapshot(s.session_id, ["nothere.py"])
    assert s.snapshot == {"f.py": 1}


def test_prune_allows_write_despite_stale_pruned_dep():
    m, _ = make()
    s1 = m.open_session("engineer")
    s2 = m.open_session("engineer")
    m.mediated_read(s1.session_id, "f.py")
    m.mediated_read(s1.session_id, "g.py")
    m.mediated_read(s2.session_id, "g.py")
    m.submit_write(s2.session_id, "g.py", b"g = 2\n", expected_version=1)
    m.prune_snapshot(s1.session_id, ["g.py"])
    out = m.submit_write(s1.session_id, "f.py", b"f = 2\n", expected_version=1)
    assert out.accepted


# -- validate ---------------------------------------------------------------

def test_validate_trivial_cases():
    assert validate({"f": 3}, {"f": 3}) == []
    assert validate({"f": 2, "g": 5}, {"f": 3, "g": 5}) == [("f", 2, 3)]
    assert validate({"f": 3, "g": 4}, {"f": 3, "g": 6}) == [("g", 4, 6)]


def test_validate_missing_path_is_violation():
    assert validate({"gone": 2}, {}) == [("gone", 2, 0)]


@given(st.dictionaries(st.sampled_from("abcde"), st.integers(1, 5), max_size=5),
       st.dictionaries(st.sampled_from("abcde"), st.integers(1, 5), max_size=5))
@settings(max_examples=300)
def test_validate_matches_bruteforce(snapshot, versions):
    expected = sorted(
        (p, o, versions.get(p, 0)) for p, o in snapshot.items()
        if o != versions.get(p, 0))
    assert sorted(validate(snapshot, versions)) == expected


def test_validate_pure():
    snap, vers = {"f": 1}, {"f": 2}
    assert validate(snap, vers) == validate(snap, vers)
    assert snap == {"f": 1}


# -- write validation and classification ------------------------------------

def test_direct_conflict_payload():
    m, _ = make()
    a = m.open_session("engineer", author="engineer_1")
    b = m.open_session("engineer", author="engineer_2")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    assert m.submit_write(a.session_id, "f.py", b"f = 2\n",
                          expected_version=1).accepted
    out = m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    assert out.status == "rejected"
    c = out.conflict
    assert c.kind == "direct"
    assert c.stale == [("f.py", 1, 2)]
    assert c.current_target_content == b"f = 2\n"
    assert "-f = 1" in c.target_diff and "+f = 2" in c.target_diff
    assert c.reservation is not None and c.reservation.holder == b.session_id


def test_stale_dependency_conflict():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(a.session_id, "g.py")
    m.mediated_read(b.session_id, "g.py")
    m.submit_write(b.session_id, "g.py", b"g = 2\n", expected_version=1)
    out = m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    assert out.conflict.kind == "stale_dependency"
    assert out.conflict.stale == [("g.py", 1, 2)]
    assert out.conflict.target_diff is None
    # reservation lands on the target, not the stale dependency
    assert out.conflict.reservation.path == "f.py"


def test_reservation_blocks_rival_write():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)  # rejected, B reserved
    m.refresh_snapshot(a.session_id, ["f.py"])
    out = m.submit_write(a.session_id, "f.py", b"f = 4\n", expected_version=2)
    assert out.conflict.kind == "reservation_held"
    assert out.conflict.holder == b.session_id
    assert out.conflict.reservation is None


def test_reservation_does_not_block_reads():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    content, version = m.mediated_read(a.session_id, "f.py")
    assert version == 2


def test_holder_retry_consumes_reservation():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    m.refresh_snapshot(b.session_id, ["f.py"])
    out = m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=2)
    assert out.accepted
    assert m.reservation_status("f.py") is None


def test_reservation_expiry():
    m, clock = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    assert m.reservation_status("f.py").holder == b.session_id
    clock.advance(11)
    assert m.reservation_status("f.py") is None
    assert m.store.log.events[-1]["kind"] == "reservation_expired"


def test_release_reservation():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    with pytest.raises(NotHolder):
        m.release_reservation(a.session_id, "f.py")
    m.release_reservation(b.session_id, "f.py")
    assert m.reservation_status("f.py") is None
    # rival may proceed under normal validation
    m.refresh_snapshot(a.session_id, ["f.py"])
    assert m.submit_write(a.session_id, "f.py", b"f = 4\n",
                          expected_version=2).accepted


def test_expected_version_mismatch_is_protocol_error():
    m, _ = make()
    s = m.open_session("engineer")
    m.mediated_read(s.session_id, "f.py")
    with pytest.raises(ProtocolError):
        m.submit_write(s.session_id, "f.py", b"f = 2\n", expected_version=7)


def test_unread_existing_target_is_protocol_error():
    m, _ = make()
    s = m.open_session("engineer")
    with pytest.raises(ProtocolError):
        m.submit_write(s.session_id, "f.py", b"f = 2\n", expected_version=1)


def test_creation_bypasses_target_snapshot_but_validates_rest():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    out = m.submit_write(a.session_id, "new.py", b"n = 1\n")
    assert out.accepted and out.new_version == 1
    # creation with a stale dependency still rejects
    m.mediated_read(b.session_id, "f.py")
    m.mediated_read(a.session_id, "f.py")
    m.submit_write(b.session_id, "f.py", b"f = 2\n", expected_version=1)
    out = m.submit_write(a.session_id, "other.py", b"o = 1\n")
    assert out.conflict.kind == "stale_dependency"


def test_write_after_external_bump_is_direct_conflict(tmp_path):
    root = tmp_path / "ws"
    root.mkdir()
    (root / "f.py").write_bytes(b"f = 1\n")
    store = Workspace.init_from_dir(root)
    m = Mediator(store, MediatorConfig(ttl=10))
    s = m.open_session("engineer")
    m.mediated_read(s.session_id, "f.py")
    (root / "f.py").write_bytes(b"f = 42\n")
    assert m.sync_fs(root) == ["f.py"]
    out = m.submit_write(s.session_id, "f.py", b"f = 2\n", expected_version=1)
    assert out.conflict.kind == "direct"
    assert out.conflict.stale == [("f.py", 1, 2)]


def test_snapshot_of_deleted_path_is_violation():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(a.session_id, "g.py")
    m.mediated_read(b.session_id, "g.py")
    m.submit_write(b.session_id, "g.py", b"", expected_version=1, delete=True)
    out = m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    assert out.conflict.kind == "stale_dependency"
    assert out.conflict.stale == [("g.py", 1, 2)]


def test_rejected_then_refresh_then_retry_accepted():
    m, _ = make()
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "f.py")
    m.mediated_read(b.session_id, "f.py")
    m.submit_write(a.session_id, "f.py", b"f = 2\n", expected_version=1)
    out = m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=1)
    stale_paths = [p for p, _, _ in out.conflict.stale]
    m.refresh_snapshot(b.session_id, stale_paths)
    retry = m.submit_write(b.session_id, "f.py", b"f = 3\n", expected_version=2)
    assert retry.accepted and retry.new_version == 3


def test_binary_target_gets_binary_marker():
    m, _ = make({"blob.bin": b"\x00\x01\x02"})
    a = m.open_session("engineer")
    b = m.open_session("engineer")
    m.mediated_read(a.session_id, "blob.bin")
    m.mediated_read(b.session_id, "blob.bin")
    m.submit_write(a.session_id, "blob.bin", b"\x00\x03", expected_version=1)
    out = m.submit_write(b.session_id, "blob.bin", b"\x00\x04",
                         expected_version=1)
    assert out.conflict.kind == "direct"
    assert out.conflict.target_diff == "<binary changed>"


# -- annotation policy integration ------------------------------------------

ANNOTATED = b"# engineer_1: keep this\nx = 1\n"


def test_warn_policy_logs_but_accepts():
    m, _ = make({"a.py": ANNOTATED})
    s = m.open_session("engineer", author="engineer_2")
    m.mediated_read(s.session_id, "a.py")
    out = m.submit_write(s.session_id, "a.py", b"x = 1\n", expected_version=1)
    assert out.accepted
    kinds = [e["kind"] for e in m.store.log.events]
    assert "annotation_violation" in kinds


def test_strict_policy_rejects_foreign_removal():
    m, _ = make({"a.py": ANNOTATED}, annotation_policy="strict")
    s = m.open_session("engineer", author="engineer_2")
    m.mediated_read(s.session_id, "a.py")
    out = m.submit_write(s.session_id, "a.py", b"x = 1\n", expected_version=1)
    assert out.status == "rejected"
    assert out.conflict.kind == "annotation_policy"
    assert m.store.get("a.py").version == 1


def test_strict_policy_allows_self_removal():
    m, _ = make({"a.py": ANNOTATED}, annotation_policy="strict")
    s = m.open_session("engineer", author="engineer_1")
    m.mediated_read(s.session_id, "a.py")
    assert m.submit_write(s.session_id, "a.py", b"x = 1\n",
                          expected_version=1).accepted


# -- reservation livelock scenario ------------------------------------------

def _cross_write_round(m, a, b, content_a, content_b):
    """One cross-wise round: each agent writes the file the other reads."""
    out_a = m.submit_write(a.session_id, "f.py", content_a,
                           expected_version=a.snapshot.get("f.py"))
    out_b = m.submit_write(b.session_id, "g.py", content_b,
                           expected_version=b.snapshot.get("g.py"))
    return out_a, out_b


def test_reservations_break_alternating_invalidation():
    """Scripted tight loop: without reservations both sides keep invalidating
    each other; with reservations the contested files serialize."""
    for enabled, expect_converge in ((True, True), (False, False)):
        m, _ = make(reservations_enabled=enabled)
        a = m.open_session("engineer")
        b = m.open_session("engineer")
        for s in (a, b):
            m.mediated_read(s.session_id, "f.py")
            m.mediated_read(s.session_id, "g.py")

        rejections = 0
        # adversarial interleaving: each accepted write lands right before
        # the other side's attempt
        for i in range(4):
            out_a = m.submit_write(a.session_id, "f.py", b"fa%d\n" % i,
                                   expected_version=a.snapshot.get("f.py"))
            out_b = m.submit_write(b.session_id, "g.py", b"gb%d\n" % i,
                                   expected_version=b.snapshot.get("g.py"))
            for session, out in ((a, out_a), (b, out_b)):
                if not out.accepted:
                    rejections += 1
                    if out.conflict.kind != "reservation_held":
                        m.refresh_snapshot(session.session_id,
                                           [p for p, _, _ in out.conflict.stale])
        if enabled:
            # holders retry once after refresh and win their contested file
            m.refresh_snapshot(b.session_id, ["f.py", "g.py"])
            out = m.submit_write(b.session_id, "g.py", b"gb-final\n",
                                 expected_version=b.snapshot.get("g.py"))
            assert out.accepted
        else:
            assert rejections >= 4


# -- randomized no-lost-update ----------------------------------------------

def test_randomized_writes_never_lose_updates():
    rng = random.Random(42)
    files = {f"file{i}.py": b"v1\n" for i in range(5)}
    m, _ = make(files)
    sessions = [m.open_session("engineer") for _ in range(4)]
    for _ in range(400):
        s = rng.choice(sessions)
        path = f"file{rng.randrange(5)}.py"
        if rng.random() < 0.5 or path not in s.snapshot:
            m.mediated_read(s.session_id, path)
        else:
            m.submit_write(s.session_id, path, b"x%d\n" % rng.randrange(99),
                           expected_version=s.snapshot[path])
    from wscoord.replay import replay
    state = replay(m.store.log.events)
    assert state.problems == []
