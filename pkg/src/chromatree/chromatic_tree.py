"""Lock-free leaf-oriented chromatic search tree.

A chromatic tree is a relaxed-balance red-black tree: every node carries
a non-negative weight (0 = red, 1 = black, larger = overweight), and the
balance conditions may be violated temporarily.  A violation is either a
red node with a red parent or a node of weight greater than one.  Updates
fix violations they create by calling cleanup, which walks down from the
entry record and applies one of a small catalog of local rebalancing
transformations (BLK, RB1, RB2, PUSH, W1..W7, plus mirror images) until
the search path is clean.  With violation threshold k > 0, updates
tolerate up to k violations on their search path before cleaning up.

The tree hangs below two sentinel nodes carrying the reserved maximal
key: the entry record and its left child.  The actual tree, when it is
not empty, is rooted at the entry record's leftmost grandchild.  All
mutation goes through the llx/scx primitives, so every operation is
non-blocking and helps conflicting operations finish.
"""

from __future__ import annotations

import enum
import threading
from collections import Counter, deque

import greenlet

from chromatree import mwcas_primitives as mw
from chromatree.mwcas_primitives import FAIL, FINALIZED
from chromatree.update_template import ScxArgumentBundle

#: reserved maximal key acting as the sentinels' infinity
INF_KEY = 2 ** 63 - 1


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    def __repr__(self):
        return self._name


#: returned by lookups and removals when the key is not present
ABSENT = _Sentinel("Absent")


class ChromaticNode(mw.DataRecord):
    """Tree node: mutable left/right links, immutable key/value/weight."""

    __slots__ = ()

    def __init__(self, key, value, weight, left=None, right=None):
        super().__init__([left, right], (key, value, weight))

    @property
    def k(self):
        return self.immutable_fields[0]

    @property
    def v(self):
        return self.immutable_fields[1]

    @property
    def w(self):
        return self.immutable_fields[2]

    # raw accessors for quiescent walkers; concurrent paths use read_field
    @property
    def left(self):
        return self.mutable_fields[0]

    @property
    def right(self):
        return self.mutable_fields[1]

    def is_leaf(self):
        return self.mutable_fields[0] is None

    def is_sentinel(self):
        return self.k == INF_KEY

    def __repr__(self):
        kind = "leaf" if self.is_leaf() else "node"
        return "<%s #%d k=%s w=%d>" % (kind, self.record_id, self.k, self.w)


class ViolationKind(enum.Enum):
    RED_RED = "RedRed"
    OVERWEIGHT = "Overweight"


class Violation:
    __slots__ = ("kind", "node", "multiplicity")

    def __init__(self, kind, node, multiplicity=1):
        self.kind = kind
        self.node = node
        self.multiplicity = multiplicity

    def __repr__(self):
        return "<Violation %s x%d at #%d>" % (self.kind.value,
                                              self.multiplicity,
                                              self.node.record_id)


class RebalanceStepKind(enum.Enum):
    """The transformation catalog; mirrored kinds end in S, BLK is its
    own mirror image."""

    BLK = "BLK"
    RB1 = "RB1"
    RB1S = "RB1s"
    RB2 = "RB2"
    RB2S = "RB2s"
    PUSH = "PUSH"
    PUSHS = "PUSHs"
    W1 = "W1"
    W1S = "W1s"
    W2 = "W2"
    W2S = "W2s"
    W3 = "W3"
    W3S = "W3s"
    W4 = "W4"
    W4S = "W4s"
    W5 = "W5"
    W5S = "W5s"
    W6 = "W6"
    W6S = "W6s"
    W7 = "W7"
    W7S = "W7s"

    @property
    def mirrored(self):
        return self.value.endswith("s")

    @property
    def base(self):
        return self.value[:-1] if self.mirrored else self.value

    @property
    def mirror(self):
        if self is RebalanceStepKind.BLK:
            return self
        if self.mirrored:
            return RebalanceStepKind(self.value[:-1])
        return RebalanceStepKind(self.value + "s")


ALL_STEP_KINDS = tuple(RebalanceStepKind)


class _Window:
    """Resolves diagram role names (u, ux, uxl, uxrl, ...) against linked
    llx snapshots, with optional left/right mirroring."""

    __slots__ = ("u", "ux", "snaps", "mirrored")

    def __init__(self, u, ux, snaps, mirrored):
        self.u = u
        self.ux = ux
        self.snaps = snaps
        self.mirrored = mirrored

    def n(self, role):
        if role == "u":
            return self.u
        node = self.ux
        for letter in role[2:]:
            slot = (letter == "r") if not self.mirrored else (letter == "l")
            node = self.snaps[node][int(slot)]
        return node

    def make(self, key_node, weight, left, right):
        if self.mirrored:
            left, right = right, left
        return ChromaticNode(key_node.k, None, weight, left, right)

    def copy(self, role, weight):
        node = self.n(role)
        snap = self.snaps[node]
        return ChromaticNode(node.k, node.v, weight, snap[0], snap[1])

    def top_weight(self, weight):
        # the chromatic subtree's root keeps weight one unconditionally
        return 1 if self.u.k == INF_KEY else weight


def _step_blk(win):
    ux = win.n("ux")
    n = win.make(ux, win.top_weight(ux.w - 1),
                 win.copy("uxl", 1), win.copy("uxr", 1))
    V = [win.u, ux, win.n("uxl"), win.n("uxr")]
    return V, V[1:], n


def _step_rb1(win):
    ux, uxl = win.n("ux"), win.n("uxl")
    nr = win.make(ux, 0, win.n("uxlr"), win.n("uxr"))
    n = win.make(uxl, win.top_weight(ux.w), win.n("uxll"), nr)
    V = [win.u, ux, uxl]
    return V, V[1:], n


def _step_rb2(win):
    ux, uxl, uxlr = win.n("ux"), win.n("uxl"), win.n("uxlr")
    nl = win.make(uxl, 0, win.n("uxll"), win.n("uxlrl"))
    nr = win.make(ux, 0, win.n("uxlrr"), win.n("uxr"))
    n = win.make(uxlr, win.top_weight(ux.w), nl, nr)
    V = [win.u, ux, uxl, uxlr]
    return V, V[1:], n


def _step_push(win):
    ux, uxl, uxr = win.n("ux"), win.n("uxl"), win.n("uxr")
    n = win.make(ux, win.top_weight(ux.w + 1),
                 win.copy("uxl", uxl.w - 1), win.copy("uxr", 0))
    V = [win.u, ux, uxl, uxr]
    return V, V[1:], n


def _step_w1(win):
    ux, uxl, uxr, uxrl = (win.n("ux"), win.n("uxl"),
                          win.n("uxr"), win.n("uxrl"))
    nl = win.make(ux, 1, win.copy("uxl", uxl.w - 1),
                  win.copy("uxrl", uxrl.w - 1))
    n = win.make(uxr, win.top_weight(ux.w), nl, win.n("uxrr"))
    V = [win.u, ux, uxl, uxr, uxrl]
    return V, V[1:], n


def _step_w2(win):
    ux, uxl, uxr, uxrl = (win.n("ux"), win.n("uxl"),
                          win.n("uxr"), win.n("uxrl"))
    nl = win.make(ux, 1, win.copy("uxl", uxl.w - 1), win.copy("uxrl", 0))
    n = win.make(uxr, win.top_weight(ux.w), nl, win.n("uxrr"))
    V = [win.u, ux, uxl, uxr, uxrl]
    return V, V[1:], n


def _step_w3(win):
    ux, uxl, uxr = win.n("ux"), win.n("uxl"), win.n("uxr")
    uxrl, uxrll = win.n("uxrl"), win.n("uxrll")
    nll = win.make(ux, 0, win.copy("uxl", uxl.w - 1), win.n("uxrlll"))
    nlr = win.make(uxrl, 0, win.n("uxrllr"), win.n("uxrlr"))
    nl = win.make(uxrll, 1, nll, nlr)
    n = win.make(uxr, win.top_weight(ux.w), nl, win.n("uxrr"))
    V = [win.u, ux, uxl, uxr, uxrl, uxrll]
    return V, V[1:], n


def _step_w4(win):
    ux, uxl, uxr = win.n("ux"), win.n("uxl"), win.n("uxr")
    uxrl, uxrlr = win.n("uxrl"), win.n("uxrlr")
    nl = win.make(ux, 1, win.copy("uxl", uxl.w - 1), win.n("uxrll"))
    nr = win.make(uxr, 0, win.copy("uxrlr", 1), win.n("uxrr"))
    n = win.make(uxrl, win.top_weight(ux.w), nl, nr)
    V = [win.u, ux, uxl, uxr, uxrl, uxrlr]
    return V, V[1:], n


def _step_w5(win):
    ux, uxl, uxr, uxrr = (win.n("ux"), win.n("uxl"),
                          win.n("uxr"), win.n("uxrr"))
    nl = win.make(ux, 1, win.copy("uxl", uxl.w - 1), win.n("uxrl"))
    n = win.make(uxr, win.top_weight(ux.w), nl, win.copy("uxrr", 1))
    V = [win.u, ux, uxl, uxr, uxrr]
    return V, V[1:], n


def _step_w6(win):
    ux, uxl, uxr, uxrl = (win.n("ux"), win.n("uxl"),
                          win.n("uxr"), win.n("uxrl"))
    nl = win.make(ux, 1, win.copy("uxl", uxl.w - 1), win.n("uxrll"))
    nr = win.make(uxr, 1, win.n("uxrlr"), win.n("uxrr"))
    n = win.make(uxrl, win.top_weight(ux.w), nl, nr)
    V = [win.u, ux, uxl, uxr, uxrl]
    return V, V[1:], n


def _step_w7(win):
    ux, uxl, uxr = win.n("ux"), win.n("uxl"), win.n("uxr")
    n = win.make(ux, win.top_weight(ux.w + 1),
                 win.copy("uxl", uxl.w - 1), win.copy("uxr", uxr.w - 1))
    V = [win.u, ux, uxl, uxr]
    return V, V[1:], n


_STEP_BUILDERS = {
    "BLK": _step_blk,
    "RB1": _step_rb1,
    "RB2": _step_rb2,
    "PUSH": _step_push,
    "W1": _step_w1,
    "W2": _step_w2,
    "W3": _step_w3,
    "W4": _step_w4,
    "W5": _step_w5,
    "W6": _step_w6,
    "W7": _step_w7,
}


class ChromaticMap:
    """Concurrent ordered map with integer keys below INF_KEY."""

    def __init__(self, violation_threshold=0, reclamation=None):
        self.violation_threshold = violation_threshold
        self.reclamation = reclamation or mw.EpochReclamation()
        self.entry = ChromaticNode(
            INF_KEY, None, 1,
            left=ChromaticNode(INF_KEY, None, 1),
            right=ChromaticNode(INF_KEY, None, 1))
        self._stats_lock = threading.Lock()
        self.step_counts = Counter()
        self.violations_created = 0
        self._inflight = {}

    # ------------------------------------------------------------------
    # read-only operations

    def get(self, key):
        node = self.entry
        while True:
            child = mw.read_field(node, 0 if key < node.k else 1)
            if child is None:
                break
            node = child
        return node.v if node.k == key else ABSENT

    def search(self, key):
        """(grandparent or None, parent, leaf) for key's search path."""
        gp, p, l, _ = self._search(key)
        return gp, p, l

    def _search(self, key):
        """Like search, but also counts violations seen on the path."""
        seen = 0
        n0, n1 = None, self.entry
        n2 = mw.read_field(n1, 0)
        prev_w = n1.w
        while True:
            if n2.w > 1:
                seen += n2.w - 1
            elif n2.w == 0 and prev_w == 0:
                seen += 1
            left = mw.read_field(n2, 0)
            if left is None:
                return n0, n1, n2, seen
            prev_w = n2.w
            n0, n1 = n1, n2
            n2 = left if key < n2.k else mw.read_field(n2, 1)

    # ------------------------------------------------------------------
    # updates

    def insert(self, key, value):
        assert key < INF_KEY
        task = greenlet.getcurrent()
        self._inflight[task] = "insert"
        try:
            while True:
                _, p, l, seen = self._search(key)
                result = self.try_insert(p, l, key, value)
                if result is FAIL:
                    continue
                created, old_value = result
                if created:
                    with self._stats_lock:
                        self.violations_created += 1
                    if seen + 1 > self.violation_threshold:
                        self.cleanup(key)
                return old_value
        finally:
            del self._inflight[task]

    def try_insert(self, p, l, key, value):
        """One insertion attempt; (createdViolation, oldValue) or FAIL."""
        sp = mw.llx(p)
        if sp is FAIL or sp is FINALIZED:
            return FAIL
        if sp[0] is l:
            slot = 0
        elif sp[1] is l:
            slot = 1
        else:
            return FAIL
        sl = mw.llx(l)
        if sl is FAIL or sl is FINALIZED:
            return FAIL
        if l.k == key:
            old_value = l.v
            # keep the old leaf's weight so path sums are unchanged
            new = ChromaticNode(key, value, l.w)
        else:
            old_value = ABSENT
            new_leaf = ChromaticNode(key, value, 1)
            old_leaf = ChromaticNode(l.k, l.v, 1)
            # a leaf hanging off an infinity-keyed node is either the
            # sentinel leaf or the root of the balanced region, and both
            # must keep weight one
            new_weight = 1 if (l.is_sentinel() or p.is_sentinel()) else l.w - 1
            if key < l.k:
                new = ChromaticNode(l.k, None, new_weight, new_leaf, old_leaf)
            else:
                new = ChromaticNode(key, None, new_weight, old_leaf, new_leaf)
        if self._scx([p, l], [l], (p, slot), new, {p: sp, l: sl}):
            return (new.w == 0 and p.w == 0), old_value
        return FAIL

    def delete(self, key):
        assert key < INF_KEY
        task = greenlet.getcurrent()
        self._inflight[task] = "delete"
        try:
            while True:
                gp, p, l, seen = self._search(key)
                if gp is None or l.k != key:
                    return ABSENT
                result = self.try_delete(gp, p, l, key)
                if result is FAIL:
                    continue
                value, created = result
                if created:
                    with self._stats_lock:
                        self.violations_created += 1
                    if seen + 1 > self.violation_threshold:
                        self.cleanup(key)
                return value
        finally:
            del self._inflight[task]

    def try_delete(self, gp, p, l, key):
        """One deletion attempt; (value, createdViolation) or FAIL."""
        sgp = mw.llx(gp)
        if sgp is FAIL or sgp is FINALIZED:
            return FAIL
        if sgp[0] is p:
            slot = 0
        elif sgp[1] is p:
            slot = 1
        else:
            return FAIL
        sp = mw.llx(p)
        if sp is FAIL or sp is FINALIZED:
            return FAIL
        if sp[0] is l:
            sib, l_is_left = sp[1], True
        elif sp[1] is l:
            sib, l_is_left = sp[0], False
        else:
            return FAIL
        sl = mw.llx(l)
        if sl is FAIL or sl is FINALIZED:
            return FAIL
        ss = mw.llx(sib)
        if ss is FAIL or ss is FINALIZED:
            return FAIL
        w = 1 if (p.k == INF_KEY or gp.k == INF_KEY) else p.w + sib.w
        new = ChromaticNode(sib.k, sib.v, w, ss[0], ss[1])
        V = [gp, p, l, sib] if l_is_left else [gp, p, sib, l]
        snaps = {gp: sgp, p: sp, l: sl, sib: ss}
        if self._scx(V, V[1:], (gp, slot), new, snaps,
                     sigma=[gp, p, l, sib]):
            return l.v, w > 1
        return FAIL

    # ------------------------------------------------------------------
    # rebalancing

    def cleanup(self, key):
        """Walk toward key from the entry record, fixing violations, until
        one full traversal reaches a leaf cleanly."""
        while True:
            n0 = n1 = None
            n2 = self.entry
            n3 = mw.read_field(n2, 0)
            while True:
                if n3.w > 1 or (n2.w == 0 and n3.w == 0):
                    self.try_rebalance(n0, n1, n2, n3)
                    break
                left = mw.read_field(n3, 0)
                if left is None:
                    return
                n0, n1, n2 = n1, n2, n3
                n3 = left if key < n3.k else mw.read_field(n3, 1)

    def _llx(self, node, sigma, snaps):
        snap = mw.llx(node)
        if snap is FAIL or snap is FINALIZED:
            return None
        sigma.append(node)
        snaps[node] = snap
        return snap

    def try_rebalance(self, ggp, gp, p, l):
        """Pick and attempt one rebalancing step for the violation at l;
        silent return means the caller should re-traverse."""
        if ggp is None:
            return
        sigma, snaps = [], {}
        s = self._llx(ggp, sigma, snaps)
        if s is None:
            return
        rl, rr = s
        if gp is not rl and gp is not rr:
            return
        s = self._llx(gp, sigma, snaps)
        if s is None:
            return
        rxl, rxr = s
        if p is not rxl and p is not rxr:
            return
        s = self._llx(p, sigma, snaps)
        if s is None:
            return
        rxxl, rxxr = s

        if l.w > 1:
            if l is rxxl:
                if self._llx(rxxl, sigma, snaps) is None:
                    return
                self.overweight_left(ggp, gp, p, sigma, snaps)
            elif l is rxxr:
                if self._llx(rxxr, sigma, snaps) is None:
                    return
                self.overweight_right(ggp, gp, p, sigma, snaps)
        else:
            # red-red violation at l
            mirrored = p is rxr
            other = rxl if mirrored else rxr
            lc_p, rc_p = (rxxr, rxxl) if mirrored else (rxxl, rxxr)
            kind = RebalanceStepKind
            if other.w == 0:
                if self._llx(other, sigma, snaps) is None:
                    return
                self.apply_rebalance_step(kind.BLK, ggp, gp, snaps, sigma)
            elif l is lc_p:
                step = kind.RB1S if mirrored else kind.RB1
                self.apply_rebalance_step(step, ggp, gp, snaps, sigma)
            elif l is rc_p:
                if self._llx(rc_p, sigma, snaps) is None:
                    return
                step = kind.RB2S if mirrored else kind.RB2
                self.apply_rebalance_step(step, ggp, gp, snaps, sigma)

    def overweight_left(self, r, rx, rxx, sigma, snaps):
        """Overweight violation at rxx's left child (llx held on r, rx,
        rxx and the violating child)."""
        self._overweight(r, rx, rxx, sigma, snaps, mirrored=False)

    def overweight_right(self, r, rx, rxx, sigma, snaps):
        self._overweight(r, rx, rxx, sigma, snaps, mirrored=True)

    def _overweight(self, r, rx, rxx, sigma, snaps, mirrored):
        kind = RebalanceStepKind

        def mk(base):
            step = kind(base)
            return step.mirror if mirrored else step

        def lc(node):
            return snaps[node][1 if mirrored else 0]

        def rc(node):
            return snaps[node][0 if mirrored else 1]

        rxxr = rc(rxx)
        if rxxr.w == 0:
            if rxx.w == 0:
                # the red pair is fixed first; which rotation applies
                # depends on where rxx hangs under rx
                if rxx is lc(rx):
                    other = rc(rx)
                    if other.w == 0:
                        if self._llx(other, sigma, snaps) is None:
                            return
                        self.apply_rebalance_step(kind.BLK, r, rx,
                                                  snaps, sigma)
                    else:
                        if self._llx(rxxr, sigma, snaps) is None:
                            return
                        self.apply_rebalance_step(mk("RB2"), r, rx,
                                                  snaps, sigma)
                else:
                    other = lc(rx)
                    if other.w == 0:
                        if self._llx(other, sigma, snaps) is None:
                            return
                        self.apply_rebalance_step(kind.BLK, r, rx,
                                                  snaps, sigma)
                    else:
                        step = kind.RB1 if mirrored else kind.RB1S
                        self.apply_rebalance_step(step, r, rx, snaps, sigma)
            else:
                if self._llx(rxxr, sigma, snaps) is None:
                    return
                rxxrl = lc(rxxr)
                if self._llx(rxxrl, sigma, snaps) is None:
                    return
                if rxxrl.w > 1:
                    self.apply_rebalance_step(mk("W1"), rx, rxx,
                                              snaps, sigma)
                elif rxxrl.w == 0:
                    step = kind.RB2 if mirrored else kind.RB2S
                    self.apply_rebalance_step(step, rx, rxx, snaps, sigma)
                else:
                    rxxrlr = rc(rxxrl)
                    if rxxrlr is None:
                        # a node we performed llx on was modified
                        return
                    if rxxrlr.w == 0:
                        if self._llx(rxxrlr, sigma, snaps) is None:
                            return
                        self.apply_rebalance_step(mk("W4"), rx, rxx,
                                                  snaps, sigma)
                    else:
                        rxxrll = lc(rxxrl)
                        if rxxrll.w == 0:
                            if self._llx(rxxrll, sigma, snaps) is None:
                                return
                            self.apply_rebalance_step(mk("W3"), rx, rxx,
                                                      snaps, sigma)
                        else:
                            self.apply_rebalance_step(mk("W2"), rx, rxx,
                                                      snaps, sigma)
        elif rxxr.w == 1:
            if self._llx(rxxr, sigma, snaps) is None:
                return
            rxxrr = rc(rxxr)
            if rxxrr is None:
                # a node we performed llx on was modified
                return
            if rxxrr.w == 0:
                if self._llx(rxxrr, sigma, snaps) is None:
                    return
                self.apply_rebalance_step(mk("W5"), rx, rxx, snaps, sigma)
            elif lc(rxxr).w == 0:
                if self._llx(lc(rxxr), sigma, snaps) is None:
                    return
                self.apply_rebalance_step(mk("W6"), rx, rxx, snaps, sigma)
            else:
                self.apply_rebalance_step(mk("PUSH"), rx, rxx, snaps, sigma)
        else:
            if self._llx(rxxr, sigma, snaps) is None:
                return
            self.apply_rebalance_step(mk("W7"), rx, rxx, snaps, sigma)

    def apply_rebalance_step(self, kind, u, ux, snapshots, sigma=None):
        """Build kind's replacement subtree from the linked llx snapshots
        and attempt its scx; True iff it committed.

        u is the node whose child pointer is swung, ux the child being
        replaced; snapshots maps every llx-ed node to its field tuple.
        """
        win = _Window(u, ux, snapshots, kind.mirrored)
        V, R, new = _STEP_BUILDERS[kind.base](win)
        order = self._breadth_first_order(u, V, snapshots)
        V = sorted(V, key=lambda node: order[id(node)])
        R = sorted(R, key=lambda node: order[id(node)])
        snap_u = snapshots[u]
        slot = 0 if snap_u[0] is ux else 1
        if self._scx(V, R, (u, slot), new, snapshots, sigma):
            with self._stats_lock:
                self.step_counts[kind] += 1
            return True
        return False

    @staticmethod
    def _breadth_first_order(root, members, snapshots):
        """id -> breadth-first position over the snapshot graph."""
        order = {}
        queue = deque([root])
        while queue:
            node = queue.popleft()
            if id(node) in order:
                continue
            order[id(node)] = len(order)
            snap = snapshots.get(node)
            if snap is not None:
                queue.extend(c for c in snap if c is not None)
        return order

    def _scx(self, V, R, fld, new, snaps, sigma=None):
        debug_info = None
        if mw.debug_enabled():
            bundle = ScxArgumentBundle(V, R, fld, new, snapshots=snaps)
            debug_info = (bundle, tuple(sigma if sigma is not None else V),
                          tuple(snaps[n] for n in (sigma or V)))
        if mw.scx(V, R, fld, new, debug_info=debug_info):
            for node in R:
                self.reclamation.retire(node)
            return True
        return False

    # ------------------------------------------------------------------
    # ordered traversal

    def successor(self, key):
        """Least (key', value') with key' > key, or ABSENT."""
        while True:
            result = self._successor_attempt(key)
            if result is not FAIL:
                return result

    def predecessor(self, key):
        """Greatest (key', value') with key' < key, or ABSENT."""
        while True:
            result = self._predecessor_attempt(key)
            if result is not FAIL:
                return result

    def _successor_attempt(self, key):
        l = self.entry
        last_left = None
        V = []
        while True:
            snap = mw.llx(l)
            if snap is FAIL or snap is FINALIZED:
                return FAIL
            if snap[0] is None:
                break
            if key < l.k:
                last_left = l
                V = [l]
                l = snap[0]
            else:
                l = snap[1]
                V.append(l)
        if last_left is None or last_left is self.entry:
            return ABSENT
        if key < l.k:
            return (l.k, l.v)
        # next leaf in order hangs leftmost under last_left's right child
        succ = mw.read_field(last_left, 1)
        while True:
            snap = mw.llx(succ)
            if snap is FAIL or snap is FINALIZED:
                return FAIL
            if snap[0] is None:
                break
            V.append(succ)
            succ = snap[0]
        result = ABSENT if succ.is_sentinel() else (succ.k, succ.v)
        if mw.vlx(V):
            return result
        return FAIL

    def _predecessor_attempt(self, key):
        l = self.entry
        last_right = None
        V = []
        while True:
            snap = mw.llx(l)
            if snap is FAIL or snap is FINALIZED:
                return FAIL
            if snap[0] is None:
                break
            if key < l.k:
                l = snap[0]
                V.append(l)
            else:
                last_right = l
                V = [l]
                l = snap[1]
        if l.k < key:
            return (l.k, l.v)
        if last_right is None:
            return ABSENT
        pred = mw.read_field(last_right, 0)
        while True:
            snap = mw.llx(pred)
            if snap is FAIL or snap is FINALIZED:
                return FAIL
            if snap[0] is None:
                break
            V.append(pred)
            pred = snap[1]
        if mw.vlx(V):
            return (pred.k, pred.v)
        return FAIL

    # ------------------------------------------------------------------
    # introspection for tests, auditors and benchmarks

    def inflight_count(self):
        return len(self._inflight)

    def reset_step_counts(self):
        with self._stats_lock:
            self.step_counts.clear()

    def chromatic_root(self):
        """Root of the chromatic subtree, or None when the map is empty.
        Quiescent use only."""
        left = self.entry.left
        return None if left.is_leaf() else left.left

    def nodes(self):
        """All records reachable from the entry record (quiescent)."""
        out = []
        queue = deque([self.entry])
        while queue:
            node = queue.popleft()
            out.append(node)
            for child in node.mutable_fields:
                if child is not None:
                    queue.append(child)
        return out

    def items(self):
        """Sorted (key, value) pairs (quiescent)."""
        out = []

        def walk(node):
            if node.is_leaf():
                if not node.is_sentinel():
                    out.append((node.k, node.v))
                return
            walk(node.left)
            walk(node.right)

        walk(self.entry)
        return out

    def violations(self):
        """All current violations (quiescent)."""
        out = []
        queue = deque([(self.entry, 1)])
        while queue:
            node, parent_w = queue.popleft()
            if node.w > 1:
                out.append(Violation(ViolationKind.OVERWEIGHT, node,
                                     node.w - 1))
            elif node.w == 0 and parent_w == 0:
                out.append(Violation(ViolationKind.RED_RED, node))
            for child in node.mutable_fields:
                if child is not None:
                    queue.append((child, node.w))
        return out

    def violation_count(self):
        return sum(v.multiplicity for v in self.violations())

    def dump_quiescent(self):
        """Line-oriented snapshot: id,key,weight,kind,left,right."""
        lines = []
        for node in self.nodes():
            kind = "leaf" if node.is_leaf() else "internal"
            lines.append("%d,%d,%d,%s,%d,%d" % (
                node.record_id, node.k, node.w, kind,
                mw.record_id_of(node.left), mw.record_id_of(node.right)))
        return "\n".join(lines)
