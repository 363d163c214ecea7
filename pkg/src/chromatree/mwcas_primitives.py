"""Multi-record load-link / store-conditional primitives.

A DataRecord carries a fixed-arity array of word-sized mutable fields
(child links), an opaque immutable payload, a descriptor reference and a
monotone finalized flag.  llx() snapshots the mutable fields of one
record, scx() atomically swings a single field of one record while
finalizing a chosen subset of the records it depends on, and vlx()
validates that a set of previously snapshotted records is still
unchanged.  The whole thing is built from a single-word compare-and-swap
plus cooperative helping: any thread that runs into an in-progress
descriptor drives it to Committed or Aborted before moving on, so no
stalled thread can block the others forever.

The freeze protocol follows the usual descriptor-based construction:
scx publishes a descriptor, then freezes each dependent record in
sequence order by CASing its descriptor reference from the value
observed by the caller's linked llx to the new descriptor.  If every
freeze lands, the allFrozen flag flips, records marked for removal get
their finalized flag set, the target field is CASed old -> new and the
descriptor commits.  A failed freeze aborts the descriptor; records
frozen by a terminal (committed or aborted) descriptor count as
unfrozen, so no pointer restoration is needed.

Test builds can install an instrumentation hook that is invoked between
every shared-memory step, which is what the deterministic schedule
explorer and the stall-injection tests hang off of.  Debug mode
additionally records every committed descriptor (for shadow replay) and
per-slot value histories (to catch ABA: a field must never be set to a
value it previously contained).
"""

from __future__ import annotations

import itertools
import threading
import weakref

import greenlet

IN_PROGRESS = "InProgress"
COMMITTED = "Committed"
ABORTED = "Aborted"


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    def __repr__(self):
        return self._name


#: llx() return arms other than a field snapshot.
FAIL = _Sentinel("Fail")
FINALIZED = _Sentinel("Finalized")

_record_ids = itertools.count(1)


class ScxDescriptor:
    """State of one scx: published once, then driven to completion by helpers."""

    __slots__ = (
        "state",
        "nodes",
        "expected_descriptors",
        "finalize_mask",
        "target_node",
        "target_slot",
        "old_value",
        "new_value",
        "all_frozen",
        "seq",
        "debug_info",
    )

    def __init__(self, nodes, expected_descriptors, finalize_mask,
                 target_node, target_slot, old_value, new_value):
        self.state = IN_PROGRESS
        self.nodes = tuple(nodes)
        self.expected_descriptors = tuple(expected_descriptors)
        self.finalize_mask = tuple(finalize_mask)
        self.target_node = target_node
        self.target_slot = target_slot
        self.old_value = old_value
        self.new_value = new_value
        self.all_frozen = False
        self.seq = None
        # free-form slot for validators (argument bundles, snapshots, ...)
        self.debug_info = None

    @property
    def finalize_set(self):
        return tuple(r for r, m in zip(self.nodes, self.finalize_mask) if m)


class _QuiescentDescriptor(ScxDescriptor):
    """Distinguished terminal descriptor installed in fresh records."""

    def __init__(self):
        super().__init__((), (), (), None, 0, None, None)
        self.state = ABORTED


_QUIESCENT = _QuiescentDescriptor()


class DataRecord:
    """A shared record: fixed mutable child links plus immutable payload."""

    __slots__ = ("mutable_fields", "immutable_fields", "descriptor_ref",
                 "finalized_flag", "record_id", "__weakref__")

    def __init__(self, mutable_fields, immutable_fields=None):
        self.mutable_fields = list(mutable_fields)
        self.immutable_fields = immutable_fields
        self.descriptor_ref = _QUIESCENT
        self.finalized_flag = False
        self.record_id = next(_record_ids)

    @property
    def arity(self):
        return len(self.mutable_fields)

    def __repr__(self):
        return "<DataRecord #%d>" % self.record_id


# ---------------------------------------------------------------------------
# shared-memory plumbing

# A single lock stands in for the machine's compare-and-swap.  Plain reads
# of attributes and list slots are atomic under the interpreter already.
_cas_lock = threading.Lock()

# Optional callback invoked between shared-memory steps (test builds only).
_hook = None

_debug = False
_debug_lock = threading.Lock()
_committed = []            # committed descriptors, in commit order
# (record_id, slot) -> (values ever held, their object ids); the value
# list keeps the objects alive so ids are never recycled
_slot_histories = {}
_commit_seq = itertools.count(1)

# Per-task linked-llx state: task -> {record: (descriptor, snapshot)}.
# Keyed by the current greenlet so both real threads (each has a main
# greenlet) and the cooperative schedule explorer get isolated state.
_link_state = weakref.WeakKeyDictionary()


def set_instrumentation_hook(fn):
    """Install fn() to run between shared-memory steps; None to disable."""
    global _hook
    _hook = fn


def set_debug(enabled):
    """Toggle descriptor-history and per-slot ABA recording."""
    global _debug
    _debug = bool(enabled)


def debug_enabled():
    return _debug


def reset_debug_state():
    global _committed, _slot_histories, _commit_seq
    with _debug_lock:
        _committed = []
        _slot_histories = {}
        _commit_seq = itertools.count(1)


def committed_descriptors():
    """Committed descriptors in commit order (debug builds)."""
    with _debug_lock:
        return list(_committed)


def record_id_of(value):
    """Stable integer id for a field value; Null maps to 0."""
    return 0 if value is None else value.record_id


def descriptor_history_dump():
    """Line-oriented dump: seq,target,slot,old,new,R-ids per committed scx."""
    lines = []
    for d in committed_descriptors():
        rids = " ".join(str(r.record_id) for r in d.finalize_set)
        lines.append("%d,%d,%d,%d,%d,%s" % (
            d.seq, d.target_node.record_id, d.target_slot,
            record_id_of(d.old_value), record_id_of(d.new_value), rids))
    return "\n".join(lines)


def _step():
    h = _hook
    if h is not None:
        h()


def _context():
    key = greenlet.getcurrent()
    ctx = _link_state.get(key)
    if ctx is None:
        ctx = {}
        _link_state[key] = ctx
    return ctx


def _cas_descriptor(r, expected, new):
    with _cas_lock:
        if r.descriptor_ref is expected:
            r.descriptor_ref = new
            return True
        return False


def _cas_slot(d):
    """CAS the target slot old -> new and log the committed write."""
    r = d.target_node
    with _cas_lock:
        if r.mutable_fields[d.target_slot] is d.old_value:
            if _debug:
                key = (r.record_id, d.target_slot)
                entry = _slot_histories.get(key)
                if entry is None:
                    entry = ([d.old_value], {id(d.old_value)})
                    _slot_histories[key] = entry
                values, ids = entry
                if id(d.new_value) in ids:
                    raise AssertionError(
                        "ABA: record #%d slot %d asked to re-install a prior value"
                        % (r.record_id, d.target_slot))
                values.append(d.new_value)
                ids.add(id(d.new_value))
            r.mutable_fields[d.target_slot] = d.new_value
            return True
        return False


def _commit(d):
    with _debug_lock:
        if d.seq is None:
            d.seq = next(_commit_seq)
            if _debug:
                _committed.append(d)
        d.state = COMMITTED


# ---------------------------------------------------------------------------
# the primitives


def help(d):
    """Drive descriptor d to Committed or Aborted; idempotent, any thread."""
    # freeze phase: claim every record in sequence order
    for r, expected in zip(d.nodes, d.expected_descriptors):
        _step()
        if not _cas_descriptor(r, expected, d):
            _step()
            if r.descriptor_ref is not d:
                # r is frozen for someone else; if the descriptor already
                # reached allFrozen we merely lost a race to a finished
                # freeze phase, otherwise this scx can never succeed
                _step()
                if d.all_frozen:
                    return True
                d.state = ABORTED
                return False
    _step()
    d.all_frozen = True
    for r, in_remove_set in zip(d.nodes, d.finalize_mask):
        if in_remove_set:
            _step()
            r.finalized_flag = True
    _step()
    _cas_slot(d)
    _step()
    _commit(d)
    return True


def llx(r):
    """Snapshot r's mutable fields, or Fail/Finalized.

    A snapshot is additionally linked for the calling task, arming a
    subsequent scx or vlx that names r.
    """
    ctx = _context()
    _step()
    marked = r.finalized_flag
    _step()
    d = r.descriptor_ref
    _step()
    state = d.state
    _step()
    snap = tuple(r.mutable_fields)
    if state == ABORTED or (state == COMMITTED and not r.finalized_flag):
        _step()
        if r.descriptor_ref is d:
            ctx[r] = (d, snap)
            return snap
    _step()
    cur = r.descriptor_ref
    if (cur.state == COMMITTED or (cur.state == IN_PROGRESS and help(cur))) \
            and marked:
        return FINALIZED
    _step()
    cur = r.descriptor_ref
    if cur.state == IN_PROGRESS:
        help(cur)
    return FAIL


def scx(V, R, fld, new, debug_info=None):
    """Atomically store new into fld while finalizing R; True iff it took.

    fld is a (record, slot) pair naming one mutable field of a member of
    V.  Every record in V must have a linked llx snapshot from this task;
    R must be a subsequence of V and must not contain fld's record.
    debug_info rides along on the descriptor for post-hoc validation.
    """
    ctx = _context()
    target, slot = fld
    nodes = tuple(V)
    remove = set(id(r) for r in R)
    expected = []
    for r in nodes:
        link = ctx.get(r)
        if link is None:
            raise AssertionError("scx on record #%d without a linked llx"
                                 % r.record_id)
        expected.append(link[0])
    if __debug__:
        v_ids = [id(r) for r in nodes]
        assert all(rid in v_ids for rid in remove), "R must be a subset of V"
        assert id(target) in v_ids, "fld's record must be in V"
        assert id(target) not in remove, "fld's record cannot be finalized"
    old = ctx[target][1][slot]
    d = ScxDescriptor(
        nodes=nodes,
        expected_descriptors=expected,
        finalize_mask=tuple(id(r) in remove for r in nodes),
        target_node=target,
        target_slot=slot,
        old_value=old,
        new_value=new,
    )
    d.debug_info = debug_info
    for r in nodes:
        ctx.pop(r, None)
    return help(d)


def vlx(V):
    """True iff no member of V changed since its linked llx."""
    ctx = _context()
    records = tuple(V)
    links = []
    for r in records:
        link = ctx.get(r)
        if link is None:
            raise AssertionError("vlx on record #%d without a linked llx"
                                 % r.record_id)
        links.append(link[0])
    ok = True
    for r, expected in zip(records, links):
        _step()
        if r.descriptor_ref is not expected:
            ok = False
            break
    for r in records:
        ctx.pop(r, None)
    return ok


def read_field(r, slot):
    """Directly read one mutable field."""
    _step()
    return r.mutable_fields[slot]


# ---------------------------------------------------------------------------
# reclamation contract

class ReclamationPolicy:
    """Records handed to retire() stay dereferenceable until no in-flight
    operation can still reach them; quiesce() marks such a point."""

    def retire(self, record):
        raise NotImplementedError

    def quiesce(self):
        raise NotImplementedError


class LeakReclamation(ReclamationPolicy):
    """Keep every retired record alive forever (test policy)."""

    def __init__(self):
        self.retired = []

    def retire(self, record):
        self.retired.append(record)

    def quiesce(self):
        pass


class EpochReclamation(ReclamationPolicy):
    """Drop retired records two quiescence epochs after retirement.

    The interpreter's collector does the actual freeing; this object only
    enforces the deferral window so late readers never chase a reclaimed
    reference.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._buckets = [[], [], []]

    def retire(self, record):
        with self._lock:
            self._buckets[0].append(record)

    def quiesce(self):
        with self._lock:
            self._buckets.pop()
            self._buckets.insert(0, [])
