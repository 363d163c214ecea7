"""Tests for the llx/scx/vlx primitives."""

import greenlet
import pytest

from chromatree import mwcas_primitives as mw
from chromatree.mwcas_primitives import (
    ABORTED,
    COMMITTED,
    FAIL,
    FINALIZED,
    IN_PROGRESS,
    DataRecord,
    EpochReclamation,
    LeakReclamation,
)
from chromatree.verification import ScheduleExplorer


@pytest.fixture(autouse=True)
def clean_global_state():
    yield
    mw.set_instrumentation_hook(None)
    mw.set_debug(False)
    mw.reset_debug_state()


def leaf():
    return DataRecord([None, None])


def node(left, right):
    return DataRecord([left, right])


def swing(parent, slot, new, finalize=()):
    """llx the whole window and scx parent's slot to new."""
    records = [parent] + list(finalize)
    for r in records:
        snap = mw.llx(r)
        assert snap not in (FAIL, FINALIZED)
    return mw.scx(records, list(finalize), (parent, slot), new)


# ---------------------------------------------------------------------------
# llx

def test_llx_on_quiescent_leaf_returns_null_children():
    assert mw.llx(leaf()) == (None, None)


def test_llx_snapshot_has_record_arity():
    r = DataRecord([None, None, None])
    assert len(mw.llx(r)) == 3


def test_llx_returns_finalized_after_removal():
    l = leaf()
    p = node(l, leaf())
    assert swing(p, 0, leaf(), finalize=[l])
    assert mw.llx(l) is FINALIZED


def test_finalization_is_monotone():
    l = leaf()
    p = node(l, leaf())
    assert swing(p, 0, leaf(), finalize=[l])
    for _ in range(3):
        assert mw.llx(l) is FINALIZED


# ---------------------------------------------------------------------------
# scx

def test_scx_swings_field_and_finalizes():
    l = leaf()
    p = node(l, leaf())
    replacement = leaf()
    assert swing(p, 0, replacement, finalize=[l])
    assert p.mutable_fields[0] is replacement
    assert l.finalized_flag
    assert mw.llx(l) is FINALIZED


def test_scx_fails_after_conflicting_commit():
    l = leaf()
    p = node(l, leaf())
    snap_p = mw.llx(p)
    snap_l = mw.llx(l)
    assert snap_p not in (FAIL, FINALIZED) and snap_l not in (FAIL, FINALIZED)
    # another task commits on the same window first
    assert greenlet.greenlet(lambda: swing(p, 0, leaf(),
                                           finalize=[l])).switch()
    before = list(p.mutable_fields)
    assert not mw.scx([p, l], [l], (p, 0), leaf())
    assert p.mutable_fields == before


def test_scx_without_linked_llx_is_a_programming_error():
    p = node(leaf(), leaf())
    with pytest.raises(AssertionError):
        mw.scx([p], [], (p, 0), leaf())


def test_scx_consumes_the_link():
    p = node(leaf(), leaf())
    mw.llx(p)
    assert mw.scx([p], [], (p, 0), leaf())
    with pytest.raises(AssertionError):
        mw.scx([p], [], (p, 0), leaf())


def test_scx_descriptor_records_window():
    l = leaf()
    p = node(l, leaf())
    mw.set_debug(True)
    replacement = leaf()
    assert swing(p, 0, replacement, finalize=[l])
    (d,) = mw.committed_descriptors()
    assert d.state == COMMITTED
    assert d.target_node is p and d.target_slot == 0
    assert d.old_value is l and d.new_value is replacement
    assert d.finalize_set == (l,)


# ---------------------------------------------------------------------------
# vlx

def test_vlx_true_when_nothing_changed():
    p = node(leaf(), leaf())
    q = node(leaf(), leaf())
    mw.llx(p)
    mw.llx(q)
    assert mw.vlx([p, q])


def test_vlx_false_after_member_changed():
    p = node(leaf(), leaf())
    q = node(leaf(), leaf())
    mw.llx(p)
    mw.llx(q)
    # another task changes q between the llx calls and the vlx
    assert greenlet.greenlet(lambda: swing(q, 1, leaf())).switch()
    assert not mw.vlx([p, q])


def test_vlx_without_link_is_a_programming_error():
    p = node(leaf(), leaf())
    with pytest.raises(AssertionError):
        mw.vlx([p])


# ---------------------------------------------------------------------------
# read_field and help

def test_read_field_returns_construction_value():
    l = leaf()
    p = node(l, None)
    assert mw.read_field(p, 0) is l
    assert mw.read_field(p, 1) is None


def test_read_field_sees_committed_write():
    p = node(leaf(), leaf())
    replacement = leaf()
    assert swing(p, 0, replacement)
    assert mw.read_field(p, 0) is replacement


def test_read_field_on_finalized_record_is_frozen():
    l = node(leaf(), leaf())
    p = node(l, leaf())
    frozen_left = l.mutable_fields[0]
    assert swing(p, 0, leaf(), finalize=[l])
    assert mw.read_field(l, 0) is frozen_left


def test_help_is_idempotent_on_committed_descriptor():
    p = node(leaf(), leaf())
    mw.set_debug(True)
    assert swing(p, 0, leaf())
    (d,) = mw.committed_descriptors()
    fields_before = list(p.mutable_fields)
    assert mw.help(d)
    assert d.state == COMMITTED
    assert p.mutable_fields == fields_before


# ---------------------------------------------------------------------------
# debug machinery

def test_aba_reinstall_is_detected_in_debug_mode():
    mw.set_debug(True)
    old = leaf()
    p = node(old, leaf())
    assert swing(p, 0, leaf())
    mw.llx(p)
    with pytest.raises(AssertionError, match="ABA"):
        mw.scx([p], [], (p, 0), old)


def test_descriptor_history_dump_format():
    mw.set_debug(True)
    l = leaf()
    p = node(l, leaf())
    replacement = leaf()
    assert swing(p, 0, replacement, finalize=[l])
    (line,) = mw.descriptor_history_dump().splitlines()
    seq, target, slot, old, new, rids = line.split(",")
    assert (int(seq), int(target), int(slot)) == (1, p.record_id, 0)
    assert int(old) == l.record_id
    assert int(new) == replacement.record_id
    assert rids == str(l.record_id)


def test_reset_debug_state_clears_history():
    mw.set_debug(True)
    p = node(leaf(), leaf())
    assert swing(p, 0, leaf())
    assert mw.committed_descriptors()
    mw.reset_debug_state()
    assert not mw.committed_descriptors()
    assert mw.descriptor_history_dump() == ""


def test_record_id_of_maps_null_to_zero():
    r = leaf()
    assert mw.record_id_of(None) == 0
    assert mw.record_id_of(r) == r.record_id


# ---------------------------------------------------------------------------
# exhaustive small-scope interleavings

def explore(make_tasks, bound=4):
    explorer = ScheduleExplorer(make_tasks, preemption_bound=bound)
    for _ in explorer.explore():
        pass
    return explorer.schedules_run


def test_llx_overlapping_scx_never_tears():
    """Concurrent llx returns Fail or a consistent snapshot, never a mix
    of old and new fields."""
    outcomes = set()

    def make_tasks():
        a, b = leaf(), leaf()
        p = DataRecord([a, b])
        new_a, new_b = leaf(), leaf()
        replacement = DataRecord([new_a, new_b])
        consistent = {(a, b), (replacement, b)}

        def writer():
            mw.llx(p)
            assert mw.scx([p], [], (p, 0), replacement)

        def reader():
            got = mw.llx(p)
            if got is FAIL:
                outcomes.add("fail")
            else:
                assert got in consistent, "torn snapshot %r" % (got,)
                outcomes.add("snapshot")

        return [writer, reader]

    assert explore(make_tasks) > 1
    assert outcomes == {"fail", "snapshot"}


def test_racing_scx_calls_exactly_one_wins():
    results = []

    def make_tasks():
        l = leaf()
        p = node(l, leaf())
        wins = []
        results.append(wins)

        def contender():
            snap_p = mw.llx(p)
            snap_l = mw.llx(l)
            if snap_p in (FAIL, FINALIZED) or snap_l in (FAIL, FINALIZED):
                return
            if mw.scx([p, l], [l], (p, 0), leaf()):
                wins.append(True)

        return [contender, contender]

    assert explore(make_tasks) > 1
    assert all(len(wins) == 1 for wins in results)


def test_racing_helpers_agree_on_final_state():
    """Two tasks committing through the same window leave a state some
    sequential order explains, under every schedule."""
    state = {}

    def make_tasks():
        l = leaf()
        p = node(l, leaf())
        mine = {}
        state.update(p=p, l=l, mine=mine)

        def contender(name):
            snap_p = mw.llx(p)
            snap_l = mw.llx(l)
            if snap_p in (FAIL, FINALIZED) or snap_l in (FAIL, FINALIZED):
                return
            replacement = leaf()
            if mw.scx([p, l], [l], (p, 0), replacement):
                mine[name] = replacement

        return [lambda: contender("a"), lambda: contender("b")]

    explorer = ScheduleExplorer(make_tasks, preemption_bound=4)
    for _ in explorer.explore():
        p, l, mine = state["p"], state["l"], state["mine"]
        assert len(mine) == 1
        assert p.mutable_fields[0] is next(iter(mine.values()))
        assert l.finalized_flag
    assert explorer.schedules_run > 1


def test_stalled_scx_is_helped_to_completion():
    """A reader that trips over the in-progress descriptor finishes the
    write on the writer's behalf; the writer still observes success."""
    state = {}

    def make_tasks():
        l = leaf()
        p = node(l, leaf())
        replacement = leaf()
        committed = []
        state.update(p=p, new=replacement, committed=committed)

        def writer():
            mw.llx(p)
            mw.llx(l)
            assert mw.scx([p, l], [l], (p, 0), replacement)
            committed.append(True)

        def reader():
            got = mw.llx(p)
            if got is not FAIL:
                assert got in ((l, p.mutable_fields[1]),
                               (replacement, p.mutable_fields[1]))

        return [writer, reader]

    explorer = ScheduleExplorer(make_tasks, preemption_bound=4)
    for _ in explorer.explore():
        assert state["committed"] == [True]
        assert state["p"].mutable_fields[0] is state["new"]
    assert explorer.schedules_run > 1


# ---------------------------------------------------------------------------
# reclamation policies

def test_leak_reclamation_keeps_everything():
    policy = LeakReclamation()
    records = [leaf() for _ in range(5)]
    for r in records:
        policy.retire(r)
    policy.quiesce()
    assert policy.retired == records


def test_epoch_reclamation_defers_two_epochs():
    policy = EpochReclamation()
    r = leaf()
    policy.retire(r)
    assert any(r in bucket for bucket in policy._buckets)
    policy.quiesce()
    assert any(r in bucket for bucket in policy._buckets)
    policy.quiesce()
    policy.quiesce()
    assert not any(r in bucket for bucket in policy._buckets)


def test_descriptor_states_are_distinct():
    assert len({IN_PROGRESS, COMMITTED, ABORTED}) == 3
