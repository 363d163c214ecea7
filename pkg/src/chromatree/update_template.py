"""Generic engine for tree updates built from linked llx calls plus one scx.

An update walks down from a start node, llx-ing each node it visits, until
a user-supplied condition says the window is complete; it then fires a
single scx whose arguments the user computes from the collected snapshots.
The engine never retries: any llx or scx failure surfaces as FAIL and the
caller restarts from scratch.

The module also ships two debug-side tools:

- validate_scx_arguments checks an argument bundle against the structural
  postconditions every template update must satisfy (membership and
  ordering of the node sequence, freshness of the replacement subtree,
  agreement between the frontier of the removed and the replacement
  subgraphs, and so on).
- audit_committed_scx replays a committed-descriptor history over a
  shadow copy of the structure, asserting after every commit that the
  reachable records still form a down-tree, that exactly the descriptor's
  finalize set was removed, and that removed records never come back.
"""

from __future__ import annotations

from collections import deque

from chromatree import mwcas_primitives as mw
from chromatree.mwcas_primitives import FAIL, FINALIZED

ALL_POSTCONDITIONS = ("PC1", "PC2", "PC3", "PC4", "PC5",
                      "PC6", "PC7", "PC8", "PC9")


class TemplateSpec:
    """Callbacks defining one update.

    Each callback receives (nodes, snapshots, args) where nodes is the
    sequence llx-ed so far and snapshots the matching field tuples.
    condition must eventually return True; next_node must return a
    non-Null child drawn from one of the snapshots.
    """

    __slots__ = ("condition", "next_node", "scx_arguments", "result")

    def __init__(self, condition, next_node, scx_arguments, result):
        self.condition = condition
        self.next_node = next_node
        self.scx_arguments = scx_arguments
        self.result = result


class ScxArgumentBundle:
    """scx arguments plus the derived sets the validator needs.

    fresh_nodes is the set of records the update allocated; when omitted
    it is derived by walking from new and stopping at records that occur
    in the snapshots.  snapshots maps each llx-ed record to its field
    tuple and is the basis for the removed-subgraph frontier computation.
    """

    __slots__ = ("V", "R", "fld", "new", "fresh_nodes", "snapshots",
                 "_frontier")

    def __init__(self, V, R, fld, new, fresh_nodes=None, snapshots=None):
        self.V = tuple(V)
        self.R = tuple(R)
        self.fld = fld
        self.new = new
        self.snapshots = dict(snapshots or {})
        if fresh_nodes is None:
            fresh_nodes = self._derive_fresh()
        self.fresh_nodes = set(fresh_nodes)
        # the frontier is captured now: child fields of the fresh nodes
        # may be rewritten by later updates once this one commits
        self._frontier = self._compute_frontier()

    @property
    def old(self):
        record, slot = self.fld
        snap = self.snapshots.get(record)
        return None if snap is None else snap[slot]

    def _derive_fresh(self):
        known = set(id(r) for r in self.snapshots)
        for snap in self.snapshots.values():
            known.update(id(c) for c in snap if c is not None)
        fresh = []
        seen = set()
        stack = [self.new]
        while stack:
            node = stack.pop()
            if node is None or id(node) in known or id(node) in seen:
                continue
            seen.add(id(node))
            fresh.append(node)
            stack.extend(node.mutable_fields)
        return fresh

    def frontier(self):
        """Existing records referenced as children of the fresh subtree."""
        return self._frontier

    def _compute_frontier(self):
        out = []
        seen = set()
        for node in self.fresh_nodes:
            for child in node.mutable_fields:
                if child is not None and child not in self.fresh_nodes \
                        and id(child) not in seen:
                    seen.add(id(child))
                    out.append(child)
        if self.new is not None and self.new not in self.fresh_nodes \
                and id(self.new) not in seen:
            out.append(self.new)
        return out


def execute_template(args, spec, start_node):
    """Run one update attempt; returns spec.result's value or FAIL."""
    nodes = []
    snapshots = []
    node = start_node
    while True:
        snap = mw.llx(node)
        if snap is FAIL or snap is FINALIZED:
            return FAIL
        nodes.append(node)
        snapshots.append(snap)
        if spec.condition(nodes, snapshots, args):
            break
        node = spec.next_node(nodes, snapshots, args)
        if mw.debug_enabled():
            again = spec.next_node(nodes, snapshots, args)
            assert again is node, "next_node callback is not deterministic"
    bundle = spec.scx_arguments(nodes, snapshots, args)
    if mw.debug_enabled():
        assert spec.condition(nodes, snapshots, args), \
            "condition callback is not deterministic"
        twin = spec.scx_arguments(nodes, snapshots, args)
        assert twin.V == bundle.V and twin.R == bundle.R \
            and twin.fld == bundle.fld, \
            "scx_arguments callback is not deterministic"
    debug_info = None
    if mw.debug_enabled():
        debug_info = (bundle, tuple(nodes), tuple(snapshots))
    if mw.scx(bundle.V, bundle.R, bundle.fld, bundle.new,
              debug_info=debug_info):
        return spec.result(nodes, snapshots, args)
    return FAIL


# ---------------------------------------------------------------------------
# argument validation


def _is_subsequence(short, long_seq):
    it = iter(long_seq)
    return all(any(x is y for y in it) for x in short)


def _down_tree_nodes(root, members):
    """Nodes of members reachable from root via current child fields, or
    None if the reachable part is not a tree (duplicate visit)."""
    if root is None:
        return None
    seen = set()
    order = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node not in members:
            continue
        if id(node) in seen:
            return None
        seen.add(id(node))
        order.append(node)
        for child in node.mutable_fields:
            if child is not None and child in members:
                queue.append(child)
    return order


def validate_scx_arguments(bundle, sigma):
    """Return the list of violated postcondition names (empty if clean).

    sigma is the full llx-ed node sequence of the template execution that
    produced the bundle.  The node-ordering condition (PC8) is judged
    against a breadth-first traversal of the snapshot graph, so it is
    only meaningful for bundles captured over a quiescent structure.
    """
    violated = []
    sigma = list(sigma)
    V, R = list(bundle.V), list(bundle.R)
    target, slot = bundle.fld
    old = bundle.old
    fresh = bundle.fresh_nodes

    # membership only: updates may list V in a different order than they
    # performed the llx calls (the ordering condition is PC8's job)
    sigma_ids = set(id(n) for n in sigma)
    if not all(id(v) in sigma_ids for v in V):
        violated.append("PC1")
    if not _is_subsequence(R, V):
        violated.append("PC2")
    if not any(target is r for r in V):
        violated.append("PC3")

    # replacement subtree: non-empty down-tree rooted at new
    if bundle.new is None:
        violated.append("PC4")
    else:
        new_tree = _down_tree_nodes(bundle.new, fresh | {bundle.new})
        if new_tree is None or not new_tree:
            violated.append("PC4")

    if old is None and (R or fresh):
        violated.append("PC5")

    frontier_new = bundle.frontier() if bundle.new is not None else []
    if not R and old is not None:
        if not (len(frontier_new) == 1 and frontier_new[0] is old):
            violated.append("PC6")

    # freshness: replacement nodes must be newly allocated, in particular
    # they cannot occur in sigma, in any snapshot, or be the old value
    known = set(sigma)
    for snap in bundle.snapshots.values():
        known.update(c for c in snap if c is not None)
    for node in fresh:
        if node in known or node is old:
            violated.append("PC7")
            break

    # ordering: V must respect a breadth-first traversal of the snapshot
    # graph rooted at the first node of sigma
    if sigma:
        bfs = []
        seen = set()
        in_sigma = set(id(n) for n in sigma)
        snapshot_of = bundle.snapshots
        queue = deque([sigma[0]])
        while queue:
            node = queue.popleft()
            if id(node) in seen:
                bfs = None
                break
            seen.add(id(node))
            bfs.append(node)
            snap = snapshot_of.get(node)
            if snap is not None:
                for child in snap:
                    if child is not None and id(child) in in_sigma:
                        queue.append(child)
        if bfs is None or not _is_subsequence(V, bfs):
            violated.append("PC8")

    # removed subgraph: mirrors the replacement subtree's frontier
    if R:
        r_set = set(R)
        removed_tree = None
        if old is not None:
            removed_tree = _removed_down_tree(old, r_set, bundle.snapshots)
        if removed_tree is None or set(removed_tree) != r_set:
            violated.append("PC9")
        else:
            frontier_removed = []
            seen = set()
            for node in removed_tree:
                snap = bundle.snapshots.get(node) or ()
                for child in snap:
                    if child is not None and child not in r_set \
                            and id(child) not in seen:
                        seen.add(id(child))
                        frontier_removed.append(child)
            if set(id(c) for c in frontier_removed) != \
                    set(id(c) for c in frontier_new):
                violated.append("PC9")
    return violated


def _removed_down_tree(old, r_set, snapshots):
    """Members of r_set reachable from old via snapshot children, or None
    if they do not form a tree."""
    seen = set()
    order = []
    queue = deque([old])
    while queue:
        node = queue.popleft()
        if node not in r_set:
            continue
        if id(node) in seen:
            return None
        seen.add(id(node))
        order.append(node)
        snap = snapshots.get(node)
        if snap is None:
            return None
        for child in snap:
            if child is not None:
                queue.append(child)
    return order


# ---------------------------------------------------------------------------
# shadow replay of a committed-descriptor history


class AuditOutcome:
    """Result of a shadow replay; falsy iff some assertion failed."""

    __slots__ = ("ok", "violation", "seq", "commits_checked")

    def __init__(self, ok, violation=None, seq=None, commits_checked=0):
        self.ok = ok
        self.violation = violation
        self.seq = seq
        self.commits_checked = commits_checked

    def __bool__(self):
        return self.ok

    def __repr__(self):
        if self.ok:
            return "<AuditOutcome ok, %d commits>" % self.commits_checked
        return "<AuditOutcome FAILED at seq %s: %s>" % (self.seq,
                                                        self.violation)


def _initial_fields(history, records):
    """Undo the committed writes to recover every record's creation-time
    fields."""
    fields = {r: list(r.mutable_fields) for r in records}
    for d in reversed(history):
        if d.target_node in fields:
            fields[d.target_node][d.target_slot] = d.old_value
    return fields


def _collect_records(history, entry):
    records = {entry}
    stack = [entry]
    for d in history:
        for r in (d.target_node,) + d.nodes + (d.old_value, d.new_value):
            if r is not None and r not in records:
                records.add(r)
                stack.append(r)
    # pull in everything hanging off the known records
    while stack:
        node = stack.pop()
        for child in node.mutable_fields:
            if child is not None and child not in records:
                records.add(child)
                stack.append(child)
    return records


def _reach(root, fields, limit=None):
    """BFS over the shadow fields; returns (order, ok) where ok is False
    on a duplicate visit (in-degree > 1 or a cycle)."""
    order = []
    seen = set()
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node is None:
            continue
        if id(node) in seen:
            return order, False
        seen.add(id(node))
        order.append(node)
        if limit is not None and len(order) > limit:
            return order, False
        for child in fields[node]:
            if child is not None:
                queue.append(child)
    return order, True


def audit_committed_scx(history, entry, full_check_every=1024):
    """Shadow-replay history (committed descriptors in commit order) from
    the structure's initial state, checking tree shape and removal
    discipline after every commit."""
    history = list(history)
    records = _collect_records(history, entry)
    fields = _initial_fields(history, records)

    reachable, ok = _reach(entry, fields)
    if not ok:
        return AuditOutcome(False, "initial structure is not a down-tree",
                            None, 0)
    reachable = set(reachable)
    ever_seen = set(reachable)
    ever_removed = set()

    for i, d in enumerate(history):
        target, slot = d.target_node, d.target_slot
        old, new = d.old_value, d.new_value
        r_set = set(d.finalize_set)
        if target not in reachable:
            return AuditOutcome(False, "target not reachable", d.seq, i)
        if fields[target][slot] is not old:
            return AuditOutcome(False, "old value mismatch", d.seq, i)

        # fresh nodes: reachable from new, stopping at already-known ones
        fresh = []
        stack = [new]
        seen = set()
        while stack:
            node = stack.pop()
            if node is None or node in ever_seen:
                continue
            if id(node) in seen:
                return AuditOutcome(False,
                                    "replacement subtree is not a tree",
                                    d.seq, i)
            seen.add(id(node))
            fresh.append(node)
            stack.extend(fields[node])
        if any(node in ever_removed for node in fresh):
            return AuditOutcome(False, "removed record re-added", d.seq, i)
        frontier = set()
        for node in fresh:
            for child in fields[node]:
                if child is not None and id(child) not in seen:
                    frontier.add(child)
        if new is not None and new in ever_seen:
            frontier.add(new)
        for child in frontier:
            if child in ever_removed:
                return AuditOutcome(False, "removed record re-added",
                                    d.seq, i)
            if child not in reachable:
                return AuditOutcome(False,
                                    "replacement references an unknown record",
                                    d.seq, i)

        # removed nodes: walk from old, stopping at the frontier
        removed = []
        stack = [old]
        seen_rm = set()
        while stack:
            node = stack.pop()
            if node is None or node in frontier:
                continue
            if id(node) in seen_rm:
                return AuditOutcome(False, "removed subgraph is not a tree",
                                    d.seq, i)
            if len(seen_rm) > len(r_set) + 8:
                return AuditOutcome(False,
                                    "removed set does not match finalize set",
                                    d.seq, i)
            seen_rm.add(id(node))
            removed.append(node)
            stack.extend(fields[node])
        if set(removed) != r_set:
            return AuditOutcome(False,
                                "removed set does not match finalize set",
                                d.seq, i)
        for node in removed:
            if not node.finalized_flag:
                return AuditOutcome(False, "removed record not finalized",
                                    d.seq, i)

        fields[target][slot] = new
        reachable.difference_update(removed)
        reachable.update(fresh)
        ever_seen.update(fresh)
        ever_removed.update(removed)

        if (i + 1) % full_check_every == 0:
            order, ok = _reach(entry, fields)
            if not ok or set(order) != reachable:
                return AuditOutcome(False, "structure is not a down-tree",
                                    d.seq, i)

    order, ok = _reach(entry, fields)
    if not ok or set(order) != reachable:
        return AuditOutcome(False, "final structure is not a down-tree",
                            history[-1].seq if history else None,
                            len(history))
    return AuditOutcome(True, commits_checked=len(history))
