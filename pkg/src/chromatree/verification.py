"""Oracles and checkers for the concurrent ordered map.

Four families of tooling live here:

- OracleMap, a plain sequential dictionary with the same five operations
  as ChromaticMap, used as the ground truth for everything else.
- check_linearizable, an exhaustive small-scope history checker in the
  Wing-Gong style: depth-first search over linearization orders with
  memoized (pending-set, oracle-state) pruning.
- audit_quiescent, which takes the line-oriented snapshot text of an
  idle tree and checks its structural invariants one by one (BST order,
  equal weighted path sums, sentinel shape, violation budget, height
  versus weighted height, and optionally the leaf set against an
  oracle).
- harnesses for controlled concurrency: a deterministic greenlet-based
  schedule explorer with a preemption bound, a stop-the-world sampler
  that parks worker threads at safe points so the tree can be audited
  mid-run, and a stall injector that permanently parks one thread to
  exercise the non-blocking guarantee.

Everything here is test-side machinery: the checkers are single threaded
over captured data, and the harnesses drive workers purely through the
shared-memory instrumentation hook.
"""

from __future__ import annotations

import bisect
import random
import threading
from collections import Counter, deque

import greenlet

from chromatree import mwcas_primitives as mw
from chromatree.chromatic_tree import ABSENT, INF_KEY, ChromaticMap

OPS = ("get", "insert", "delete", "successor", "predecessor")


# ---------------------------------------------------------------------------
# sequential oracle


class OracleMap:
    """Reference dictionary: a sorted key list plus parallel values."""

    __slots__ = ("keys", "values")

    def __init__(self, pairs=()):
        items = sorted(pairs)
        self.keys = [k for k, _ in items]
        self.values = [v for _, v in items]

    def copy(self):
        out = OracleMap()
        out.keys = list(self.keys)
        out.values = list(self.values)
        return out

    def items(self):
        return list(zip(self.keys, self.values))

    def __len__(self):
        return len(self.keys)

    def apply(self, op, args):
        """Apply one operation in place and return its result."""
        if op == "get":
            (key,) = args
            i = bisect.bisect_left(self.keys, key)
            if i < len(self.keys) and self.keys[i] == key:
                return self.values[i]
            return ABSENT
        if op == "insert":
            key, value = args
            i = bisect.bisect_left(self.keys, key)
            if i < len(self.keys) and self.keys[i] == key:
                old = self.values[i]
                self.values[i] = value
                return old
            self.keys.insert(i, key)
            self.values.insert(i, value)
            return ABSENT
        if op == "delete":
            (key,) = args
            i = bisect.bisect_left(self.keys, key)
            if i < len(self.keys) and self.keys[i] == key:
                del self.keys[i]
                return self.values.pop(i)
            return ABSENT
        if op == "successor":
            (key,) = args
            i = bisect.bisect_right(self.keys, key)
            if i < len(self.keys):
                return self.keys[i], self.values[i]
            return ABSENT
        if op == "predecessor":
            (key,) = args
            i = bisect.bisect_left(self.keys, key)
            if i > 0:
                return self.keys[i - 1], self.values[i - 1]
            return ABSENT
        raise ValueError("unknown operation %r" % (op,))


def oracle_apply(state, op, args):
    """Pure-functional form: returns (new state, result)."""
    new = state.copy()
    result = new.apply(op, args)
    return new, result


# ---------------------------------------------------------------------------
# histories and linearizability


class HistoryEvent:
    """One completed operation with logical invoke/response times."""

    __slots__ = ("thread", "op", "args", "invoke", "response", "result")

    def __init__(self, thread, op, args, invoke, response, result):
        self.thread = thread
        self.op = op
        self.args = tuple(args)
        self.invoke = invoke
        self.response = response
        self.result = result

    def __repr__(self):
        return "<%s %s%r by %s [%s,%s] -> %r>" % (
            type(self).__name__, self.op, self.args, self.thread,
            self.invoke, self.response, self.result)


class History:
    """A sequence of HistoryEvents; per-thread events must be well nested."""

    def __init__(self, events):
        self.events = list(events)
        self.validate()

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def validate(self):
        last = {}
        for e in self.events:
            if not e.invoke < e.response:
                raise ValueError("event %r does not span an interval" % e)
            if e.thread in last and e.invoke < last[e.thread]:
                raise ValueError("overlapping events on thread %r"
                                 % (e.thread,))
            last[e.thread] = e.response

    def threads(self):
        return sorted(set(e.thread for e in self.events))


class ScopeExceeded(Exception):
    """History too large for the exhaustive checker; use sampled checking
    instead."""


class LinearizationResult:
    __slots__ = ("ok", "witness", "message")

    def __init__(self, ok, witness=None, message=""):
        self.ok = ok
        self.witness = witness
        self.message = message

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return "<LinearizationResult %s %s>" % (
            "ok" if self.ok else "FAILED", self.message)


def _same_result(a, b):
    if a is b:
        return True
    if a is ABSENT or b is ABSENT:
        return False
    return a == b


def check_linearizable(history, max_threads=4, max_events=48):
    """Exhaustively search for a linearization order of history.

    Returns a LinearizationResult whose witness (when ok) is the list of
    events in a valid sequential order.  Memoizes failed
    (pending-events, oracle-state) pairs so equivalent search branches
    are pruned.
    """
    events = list(history)
    if len(events) > max_events or len(set(e.thread for e in events)) \
            > max_threads:
        raise ScopeExceeded("history of %d events exceeds the exhaustive "
                            "scope; use sampled checking instead"
                            % len(events))
    n = len(events)
    full_mask = (1 << n) - 1
    failed = set()
    witness = []

    def state_key(oracle):
        return tuple(oracle.keys), tuple(oracle.values)

    def search(mask, oracle):
        if mask == full_mask:
            return True
        key = (mask, state_key(oracle))
        if key in failed:
            return False
        # the earliest response among pending events bounds who may go next
        horizon = None
        for i in range(n):
            if not mask >> i & 1:
                if horizon is None or events[i].response < horizon:
                    horizon = events[i].response
        for i in range(n):
            if mask >> i & 1:
                continue
            e = events[i]
            if e.invoke > horizon:
                continue
            trial = oracle.copy()
            got = trial.apply(e.op, e.args)
            if not _same_result(got, e.result):
                continue
            witness.append(e)
            if search(mask | 1 << i, trial):
                return True
            witness.pop()
        failed.add(key)
        return False

    if search(0, OracleMap()):
        return LinearizationResult(True, list(witness),
                                   "%d events" % n)
    return LinearizationResult(
        False, None,
        "no linearization order exists for %d events" % n)


# ---------------------------------------------------------------------------
# quiescent snapshot auditing


class CheckResult:
    __slots__ = ("name", "ok", "detail", "counterexample")

    def __init__(self, name, ok, detail="", counterexample=()):
        self.name = name
        self.ok = ok
        self.detail = detail
        self.counterexample = list(counterexample)

    def __bool__(self):
        return self.ok


class AuditReport:
    """Outcome of audit_quiescent: one CheckResult per invariant."""

    CHECKS = ("bst_order", "equal_weighted_paths", "sentinel_shape",
              "violation_count", "height_vs_weighted_height",
              "leaf_set_vs_oracle")

    def __init__(self, checks):
        self.checks = {c.name: c for c in checks}
        for name in self.CHECKS:
            if name not in self.checks:
                raise ValueError("missing check %s" % name)

    def __getattr__(self, name):
        try:
            return self.checks[name]
        except KeyError:
            raise AttributeError(name)

    @property
    def ok(self):
        return all(c.ok for c in self.checks.values())

    def __bool__(self):
        return self.ok

    def lines(self):
        out = []
        for name in self.CHECKS:
            c = self.checks[name]
            line = "check=%s status=%s" % (name, "pass" if c.ok else "fail")
            if c.detail:
                line += " detail=%s" % c.detail
            if c.counterexample:
                line += " nodes=%s" % ",".join(map(str, c.counterexample))
            out.append(line)
        return "\n".join(out)

    def records(self):
        """One mapping per check, for machine consumption."""
        return [
            {"check": name, "ok": self.checks[name].ok,
             "detail": self.checks[name].detail,
             "counterexample": list(self.checks[name].counterexample)}
            for name in self.CHECKS
        ]


class _SnapNode:
    __slots__ = ("id", "k", "w", "leaf", "left", "right")


def parse_snapshot(text):
    """Parse 'id,key,weight,kind,left,right' lines into linked _SnapNodes;
    returns the root node (the one that is nobody's child)."""
    nodes = {}
    children = {}
    for lineno, line in enumerate(text.strip().splitlines(), 1):
        parts = line.strip().split(",")
        if len(parts) != 6:
            raise ValueError("malformed snapshot line %d: %r"
                             % (lineno, line))
        node = _SnapNode()
        node.id = int(parts[0])
        node.k = int(parts[1])
        node.w = int(parts[2])
        node.leaf = parts[3] == "leaf"
        nodes[node.id] = node
        children[node.id] = (int(parts[4]), int(parts[5]))
    child_ids = set()
    for nid, (l, r) in children.items():
        node = nodes[nid]
        node.left = nodes[l] if l else None
        node.right = nodes[r] if r else None
        child_ids.update(c for c in (l, r) if c)
    roots = [n for nid, n in nodes.items() if nid not in child_ids]
    if len(roots) != 1:
        raise ValueError("snapshot has %d roots, expected 1" % len(roots))
    return roots[0]


def _leaves(node):
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        if n.leaf:
            out.append(n)
        else:
            stack.append(n.right)
            stack.append(n.left)
    return out


def _check_bst(root):
    bad = []

    def walk(n, lo, hi):
        if not (lo is None or lo <= n.k) or not (hi is None or n.k <= hi):
            bad.append(n.id)
        if not n.leaf:
            # routing key: strictly greater than everything on the left,
            # no greater than anything on the right.  searches always go
            # left at infinity-keyed nodes, so those do not tighten the
            # left bound.
            left_hi = hi
            if n.k != INF_KEY:
                left_hi = n.k - 1 if hi is None else min(n.k - 1, hi)
            walk(n.left, lo, left_hi)
            walk(n.right, n.k, hi)

    walk(root, None, None)
    return bad


def _check_weighted_paths(chromatic_root):
    """(leaf id -> weighted path sum) mismatches, as counterexample ids."""
    sums = {}

    def walk(n, acc):
        if n.leaf:
            sums[n.id] = acc + n.w
        else:
            walk(n.left, acc + n.w)
            walk(n.right, acc + n.w)

    walk(chromatic_root, 0)
    distinct = set(sums.values())
    if len(distinct) <= 1:
        return []
    majority = Counter(sums.values()).most_common(1)[0][0]
    return sorted(i for i, s in sums.items() if s != majority)


def _count_violations(root):
    count = 0
    nodes = []
    stack = [(root, 1)]
    while stack:
        n, parent_w = stack.pop()
        if n.w > 1:
            count += n.w - 1
            nodes.append(n.id)
        elif n.w == 0 and parent_w == 0:
            count += 1
            nodes.append(n.id)
        if not n.leaf:
            stack.append((n.left, n.w))
            stack.append((n.right, n.w))
    return count, nodes


def _height(node):
    if node.leaf:
        return 0
    return 1 + max(_height(node.left), _height(node.right))


def weighted_height(node):
    """Leaf: its weight; internal: max of children plus its weight."""
    if node.leaf:
        return node.w
    return max(weighted_height(node.left),
               weighted_height(node.right)) + node.w


def audit_quiescent(snapshot_text, expected_keys=None, inflight=0):
    """Audit an idle tree's snapshot text; returns an AuditReport.

    expected_keys, when given, is the key set the tree should hold.
    inflight is the number of updates that were in progress when the
    snapshot was taken: it is the violation budget and the slack term in
    the height bound.
    """
    root = parse_snapshot(snapshot_text)
    checks = []

    bad = _check_bst(root)
    checks.append(CheckResult("bst_order", not bad,
                              "" if not bad else "keys out of order", bad))

    # treetop shape: root and its right child are infinity sentinels of
    # weight one; the left child is either the sentinel leaf (empty map)
    # or a weight-one infinity node over the balanced region and the
    # sentinel leaf
    shape_bad = []
    ok = root.k == INF_KEY and root.w == 1 and not root.leaf
    if not ok:
        shape_bad.append(root.id)
    else:
        r = root.right
        if not (r.leaf and r.k == INF_KEY and r.w == 1):
            ok = False
            shape_bad.append(r.id)
        l = root.left
        if l.leaf:
            if not (l.k == INF_KEY and l.w == 1):
                ok = False
                shape_bad.append(l.id)
        else:
            if not (l.k == INF_KEY and l.w == 1):
                ok = False
                shape_bad.append(l.id)
            elif not (l.right.leaf and l.right.k == INF_KEY
                      and l.right.w == 1):
                ok = False
                shape_bad.append(l.right.id)
    checks.append(CheckResult("sentinel_shape", ok,
                              "" if ok else "treetop malformed", shape_bad))

    croot = None
    if ok and not root.left.leaf:
        croot = root.left.left

    if croot is None:
        checks.append(CheckResult("equal_weighted_paths", True, "empty"))
    else:
        bad = _check_weighted_paths(croot)
        checks.append(CheckResult(
            "equal_weighted_paths", not bad,
            "" if not bad else "weighted path sums differ", bad))

    count, nodes = _count_violations(root)
    checks.append(CheckResult(
        "violation_count", count <= inflight,
        "%d violations, budget %d" % (count, inflight),
        [] if count <= inflight else nodes))

    if croot is None:
        checks.append(CheckResult("height_vs_weighted_height", True,
                                  "empty"))
    else:
        h = _height(croot)
        wh = weighted_height(croot)
        ok = h <= 2 * wh + inflight
        checks.append(CheckResult(
            "height_vs_weighted_height", ok,
            "h=%d wh=%d budget=%d" % (h, wh, inflight),
            [] if ok else [croot.id]))

    if expected_keys is None:
        checks.append(CheckResult("leaf_set_vs_oracle", True,
                                  "no oracle supplied"))
    else:
        got = set(n.k for n in _leaves(root) if n.k != INF_KEY)
        want = set(expected_keys)
        ok = got == want
        diff = sorted(got.symmetric_difference(want))
        checks.append(CheckResult(
            "leaf_set_vs_oracle", ok,
            "" if ok else "key sets differ", diff))

    return AuditReport(checks)


# ---------------------------------------------------------------------------
# sequential simulation


class SimulationStats:
    __slots__ = ("ops", "results", "step_counts", "violations_created",
                 "violations_eliminated", "final_violations")

    def __init__(self, ops, results, step_counts, created, final):
        self.ops = ops
        self.results = results
        self.step_counts = step_counts
        self.violations_created = created
        self.final_violations = final
        self.violations_eliminated = created - final

    @property
    def total_steps(self):
        return sum(self.step_counts.values())


def simulate_sequential(ops_script, k=0):
    """Run a deterministic script on a fresh map; returns (tree, stats).

    ops_script is a sequence of tuples: ("insert", key, value),
    ("delete", key), ("get", key), ("successor", key) or
    ("predecessor", key).
    """
    tree = ChromaticMap(violation_threshold=k,
                        reclamation=mw.LeakReclamation())
    results = []
    for entry in ops_script:
        op, args = entry[0], entry[1:]
        if op == "insert":
            results.append(tree.insert(*args))
        elif op == "delete":
            results.append(tree.delete(*args))
        elif op == "get":
            results.append(tree.get(*args))
        elif op == "successor":
            results.append(tree.successor(*args))
        elif op == "predecessor":
            results.append(tree.predecessor(*args))
        else:
            raise ValueError("unknown operation %r" % (op,))
    stats = SimulationStats(
        ops=len(results),
        results=results,
        step_counts=Counter({kind.value: count for kind, count
                             in tree.step_counts.items()}),
        created=tree.violations_created,
        final=tree.violation_count(),
    )
    return tree, stats


def random_script(n_ops, key_range, seed, value_base=0,
                  weights=(45, 35, 10, 5, 5)):
    """Deterministic random op script: insert/delete/get/succ/pred mix."""
    rng = random.Random(seed)
    ops = ("insert", "delete", "get", "successor", "predecessor")
    script = []
    for i in range(n_ops):
        op = rng.choices(ops, weights=weights)[0]
        key = rng.randrange(key_range)
        if op == "insert":
            script.append((op, key, value_base + i))
        else:
            script.append((op, key))
    return script


def tree_shape(tree):
    """Canonical nested-tuple shape of a quiescent tree (ids erased)."""

    def walk(node):
        if node.is_leaf():
            return (node.k, node.w)
        return (node.k, node.w, walk(node.left), walk(node.right))

    return walk(tree.entry)


def search_path_nodes(tree, key):
    """Records a BST search for key visits, entry included (quiescent)."""
    out = []
    node = tree.entry
    while node is not None:
        out.append(node)
        if node.is_leaf():
            break
        node = node.left if key < node.k else node.right
    return out


def run_cleanup_tracking_viol(tree, key):
    """Run tree.cleanup(key), asserting after every committed rebalancing
    step that each remaining violation sits on the search path to key.
    Returns the number of committed steps.  Meant for single-threaded
    trees whose only violations stem from an update of key."""
    committed = [0]
    original = tree.apply_rebalance_step

    def wrapped(kind, u, ux, snapshots, sigma=None):
        ok = original(kind, u, ux, snapshots, sigma)
        if ok:
            committed[0] += 1
            on_path = set(id(n) for n in search_path_nodes(tree, key))
            stray = [v for v in tree.violations()
                     if id(v.node) not in on_path]
            assert not stray, (
                "violations left the search path to %r after %s: %r"
                % (key, kind.value, stray))
        return ok

    tree.apply_rebalance_step = wrapped
    try:
        tree.cleanup(key)
    finally:
        del tree.apply_rebalance_step
    return committed[0]


# ---------------------------------------------------------------------------
# deterministic schedule exploration


class _ExplorerTask:
    __slots__ = ("idx", "fn", "glet", "done")

    def __init__(self, idx, fn):
        self.idx = idx
        self.fn = fn
        self.glet = None
        self.done = False


class ScheduleExplorer:
    """Bounded exhaustive exploration of cooperative interleavings.

    make_tasks() must return a fresh list of zero-argument callables,
    one per simulated thread, touching only freshly created shared
    state.  Each schedule runs the tasks to completion under a
    deterministic scheduler that preempts the running task at a chosen
    set of shared-memory steps; explore() enumerates, depth first, every
    schedule with at most preemption_bound preemptions.

    The scheduler owns the instrumentation hook while a schedule runs.
    Logical time (self.time) advances at every shared-memory step and
    every recorded event, so tasks can timestamp operation invocations
    and responses via now()/record().
    """

    def __init__(self, make_tasks, preemption_bound=4, max_schedules=None):
        self.make_tasks = make_tasks
        self.preemption_bound = preemption_bound
        self.max_schedules = max_schedules
        self.schedules_run = 0
        self.truncated = False
        # per-run state
        self.time = 0
        self._tasks = []
        self._current = None
        self._main = None
        self._preempt_at = frozenset()
        self._choice_steps = []
        self._steps = 0
        self._events = []

    # -- api used by task bodies ----------------------------------------

    def now(self):
        return self.time

    def record(self, thread, op, args, fn):
        """Run fn(), logging it as an operation of the given thread."""
        self.time += 1
        invoke = self.time
        result = fn()
        self.time += 1
        self._events.append(HistoryEvent(thread, op, args, invoke,
                                         self.time, result))
        return result

    # -- scheduler ------------------------------------------------------

    def _hook(self):
        self._steps += 1
        self.time += 1
        if not self._runnable_other():
            return
        if len(self._preempt_at) < self.preemption_bound:
            self._choice_steps.append(self._steps)
        if self._steps in self._preempt_at:
            self._main.switch()

    def _runnable_other(self):
        cur = self._current
        return any(not t.done and t is not cur for t in self._tasks)

    def _run_one(self, preempt_at):
        """Execute one complete schedule; returns its recorded history."""
        self._preempt_at = preempt_at
        self._choice_steps = []
        self._steps = 0
        self.time = 0
        self._events = []
        self._main = greenlet.getcurrent()
        fns = self.make_tasks()
        self._tasks = [_ExplorerTask(i, fn) for i, fn in enumerate(fns)]
        for t in self._tasks:
            t.glet = greenlet.greenlet(t.fn, parent=self._main)
        queue = deque(self._tasks)
        old_hook = mw._hook
        mw.set_instrumentation_hook(self._hook)
        try:
            while queue:
                task = queue.popleft()
                if task.done:
                    continue
                self._current = task
                task.glet.switch()
                if task.glet.dead:
                    task.done = True
                else:
                    # preempted: run again after the others
                    queue.append(task)
        finally:
            mw.set_instrumentation_hook(old_hook)
            self._current = None
        return History(self._events)

    def explore(self):
        """Yield (preemption steps, History) per schedule, depth first."""
        stack = [()]
        while stack:
            preempts = stack.pop()
            if self.max_schedules is not None \
                    and self.schedules_run >= self.max_schedules:
                self.truncated = True
                return
            history = self._run_one(frozenset(preempts))
            self.schedules_run += 1
            yield preempts, history
            last = preempts[-1] if preempts else 0
            if len(preempts) < self.preemption_bound:
                # extend beyond the deepest existing preemption so every
                # schedule is generated exactly once
                for step in reversed(self._choice_steps):
                    if step > last:
                        stack.append(preempts + (step,))


def explore_map_histories(thread_ops, preemption_bound=4, k=0,
                          max_schedules=None):
    """Explore all interleavings of the given per-thread op scripts on a
    fresh map, yielding one History per schedule.

    thread_ops is a list of op scripts in the simulate_sequential
    format, one per simulated thread.
    """
    explorer = ScheduleExplorer(lambda: _map_tasks(explorer, thread_ops, k),
                                preemption_bound=preemption_bound,
                                max_schedules=max_schedules)
    for _, history in explorer.explore():
        yield history


def _map_tasks(explorer, thread_ops, k):
    tree = ChromaticMap(violation_threshold=k,
                        reclamation=mw.LeakReclamation())
    methods = {"insert": tree.insert, "delete": tree.delete,
               "get": tree.get, "successor": tree.successor,
               "predecessor": tree.predecessor}

    def make_task(tid, script):
        def body():
            for entry in script:
                op, args = entry[0], entry[1:]
                explorer.record(tid, op, args,
                                lambda op=op, args=args: methods[op](*args))
        return body

    return [make_task(i, script) for i, script in enumerate(thread_ops)]


# ---------------------------------------------------------------------------
# thread harnesses built on the instrumentation hook


class WorldStopper:
    """Parks registered worker threads at safe points on request.

    Workers hit safe points implicitly at every shared-memory step (via
    the instrumentation hook) and explicitly between operations via
    checkpoint().  stopped() blocks until every registered worker is
    parked, hands control to the caller for auditing, then releases
    them.  The auditing thread must not be registered.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._workers = set()
        self._parked = 0
        self._stopping = False

    def register(self):
        with self._cond:
            self._workers.add(threading.get_ident())

    def unregister(self):
        with self._cond:
            self._workers.discard(threading.get_ident())
            self._cond.notify_all()

    def install(self):
        mw.set_instrumentation_hook(self._safe_point)

    def uninstall(self):
        mw.set_instrumentation_hook(None)

    def checkpoint(self):
        self._safe_point()

    def _safe_point(self):
        if not self._stopping:
            return
        ident = threading.get_ident()
        with self._cond:
            if ident not in self._workers:
                return
            self._parked += 1
            self._cond.notify_all()
            while self._stopping:
                self._cond.wait()
            self._parked -= 1

    def stopped(self):
        return _StoppedWorld(self)


class _StoppedWorld:
    def __init__(self, stopper):
        self.stopper = stopper

    def __enter__(self):
        s = self.stopper
        with s._cond:
            s._stopping = True
            while s._parked < len(s._workers):
                s._cond.wait()
        return self

    def __exit__(self, *exc):
        s = self.stopper
        with s._cond:
            s._stopping = False
            s._cond.notify_all()
        return False


class StallInjector:
    """Permanently parks whichever registered thread executes a chosen
    shared-memory step, to simulate a crashed or descheduled thread."""

    def __init__(self, park_at_step):
        self.park_at_step = park_at_step
        self.parked_thread = None
        self._lock = threading.Lock()
        self._release = threading.Event()
        self._count = 0
        self._workers = set()

    def register(self):
        with self._lock:
            self._workers.add(threading.get_ident())

    def install(self):
        mw.set_instrumentation_hook(self._hook)

    def uninstall(self):
        mw.set_instrumentation_hook(None)

    def release(self):
        """Let the parked thread run again (test teardown)."""
        self._release.set()

    def _hook(self):
        ident = threading.get_ident()
        with self._lock:
            if ident not in self._workers:
                return
            self._count += 1
            hit = self._count == self.park_at_step \
                and self.parked_thread is None
            if hit:
                self.parked_thread = ident
        if hit:
            self._release.wait()
