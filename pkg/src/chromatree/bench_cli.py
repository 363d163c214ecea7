"""Throughput benchmark driver for the concurrent ordered map.

Runs timed trials of a configurable workload (insert/delete/get mix over
a uniform key range) against ChromaticMap, with the map prefilled to its
steady-state size first, and reports per-trial throughput as CSV.

Two timing modes are supported: wall-clock trials (each worker loops for
a fixed number of seconds) and deterministic ops-budget trials (each
worker performs a fixed number of operations), the latter giving exactly
reproducible results for a given seed.  Key and operation streams come
from per-thread counter-based generators, so workers share no RNG state.
"""

from __future__ import annotations

import statistics
import sys
import threading
import time
from collections import Counter

import click
import numpy as np

from chromatree.chromatic_tree import ABSENT, ChromaticMap

_BATCH = 1024


class WorkloadConfig:
    """One benchmark configuration; percentages must sum to 100."""

    def __init__(self, insert_pct, delete_pct, get_pct, key_range,
                 threads=1, trial_seconds=5.0, trials=5,
                 violation_threshold=0, seed=0, warmup_trials=0,
                 ops_budget=None, audit=False, record_ops=False):
        if insert_pct + delete_pct + get_pct != 100:
            raise ValueError("operation mix must sum to 100 percent")
        if key_range <= 0:
            raise ValueError("key range must be nonempty")
        self.insert_pct = insert_pct
        self.delete_pct = delete_pct
        self.get_pct = get_pct
        self.key_range = key_range
        self.threads = threads
        self.trial_seconds = trial_seconds
        self.trials = trials
        self.violation_threshold = violation_threshold
        self.seed = seed
        self.warmup_trials = warmup_trials
        self.ops_budget = ops_budget
        self.audit = audit
        self.record_ops = record_ops

    @property
    def mix_label(self):
        return "%di-%dd" % (self.insert_pct, self.delete_pct)

    @property
    def variant_label(self):
        return "chromatic-k%d" % self.violation_threshold

    def expected_size(self):
        """Steady-state expected map size for this mix."""
        updates = self.insert_pct + self.delete_pct
        if updates == 0:
            # read-only runs are measured against a half-full map
            return self.key_range / 2
        return self.key_range * self.insert_pct / updates


class TrialResult:
    __slots__ = ("total_ops", "ops_per_second", "per_op_breakdown",
                 "prefill_size", "steady_state_expected_size",
                 "duration_actual", "audit_report", "op_logs", "final_size")

    def __init__(self, total_ops, duration_actual, per_op_breakdown,
                 prefill_size, steady_state_expected_size,
                 audit_report=None, op_logs=None, final_size=0):
        self.total_ops = total_ops
        self.duration_actual = duration_actual
        self.ops_per_second = total_ops / duration_actual
        self.per_op_breakdown = per_op_breakdown
        self.prefill_size = prefill_size
        self.steady_state_expected_size = steady_state_expected_size
        self.audit_report = audit_report
        self.op_logs = op_logs
        self.final_size = final_size


def _rng(config, thread_index):
    # prefill uses thread_index -1; the key space wraps so every index
    # still gets its own counter-based stream
    key = (config.seed + thread_index) % (1 << 128)
    return np.random.Generator(np.random.Philox(key=key))


class _OpStream:
    """Batched per-thread stream of (op, key) pairs."""

    def __init__(self, rng, config):
        self.rng = rng
        self.insert_below = config.insert_pct
        self.delete_below = config.insert_pct + config.delete_pct
        self.key_range = config.key_range
        self._ops = self._keys = ()
        self._i = _BATCH

    def next(self):
        if self._i >= _BATCH:
            self._ops = self.rng.integers(0, 100, size=_BATCH)
            self._keys = self.rng.integers(0, self.key_range, size=_BATCH)
            self._i = 0
        i = self._i
        self._i = i + 1
        roll = self._ops[i]
        if roll < self.insert_below:
            op = "insert"
        elif roll < self.delete_below:
            op = "delete"
        else:
            op = "get"
        return op, int(self._keys[i])


def prefill(tree, config, max_ops=None):
    """Random updates in the configured ratio until the map size is
    within 5% of its steady-state expectation; returns the size."""
    expected = config.expected_size()
    band = 0.05 * expected
    if max_ops is None:
        max_ops = 60 * config.key_range + 10_000
    rng = _rng(config, -1)
    insert_share = config.insert_pct + config.delete_pct
    if insert_share == 0:
        insert_below = 50
        delete_below = 100
    else:
        insert_below = 100 * config.insert_pct // insert_share
        delete_below = 100
    size = 0
    rolls = keys = ()
    i = _BATCH
    for _ in range(max_ops):
        if abs(size - expected) <= band:
            return size
        if i >= _BATCH:
            rolls = rng.integers(0, 100, size=_BATCH)
            keys = rng.integers(0, config.key_range, size=_BATCH)
            i = 0
        key = int(keys[i])
        if rolls[i] < insert_below:
            if tree.insert(key, key) is ABSENT:
                size += 1
        elif rolls[i] < delete_below:
            if tree.delete(key) is not ABSENT:
                size -= 1
        i += 1
    raise TimeoutError("prefill did not reach %.0f +/- %.0f within %d ops"
                       % (expected, band, max_ops))


def _worker(tree, config, thread_index, deadline, budget, counts, logs):
    stream = _OpStream(_rng(config, thread_index), config)
    log = logs[thread_index] if logs is not None else None
    local = Counter()
    done = 0
    value = 0
    while True:
        if budget is not None:
            if done >= budget:
                break
        elif done % 256 == 0 and time.monotonic() >= deadline:
            break
        op, key = stream.next()
        if op == "insert":
            result = tree.insert(key, value)
            value += 1
        elif op == "delete":
            result = tree.delete(key)
        else:
            result = tree.get(key)
        if log is not None:
            log.append((op, key, result))
        local[op] += 1
        done += 1
    counts[thread_index] = local


def run_trial(config):
    """One trial: fresh map, prefill, timed worker phase."""
    tree = ChromaticMap(violation_threshold=config.violation_threshold)
    size = prefill(tree, config)
    counts = [None] * config.threads
    logs = [[] for _ in range(config.threads)] if config.record_ops else None
    budget = None
    deadline = None
    start = time.monotonic()
    if config.ops_budget is not None:
        budget = config.ops_budget // config.threads
    else:
        deadline = start + config.trial_seconds
    threads = [
        threading.Thread(target=_worker,
                         args=(tree, config, i, deadline, budget, counts,
                               logs))
        for i in range(config.threads)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    duration = time.monotonic() - start
    breakdown = Counter()
    for c in counts:
        breakdown.update(c)
    report = None
    if config.audit:
        from chromatree import verification
        report = verification.audit_quiescent(tree.dump_quiescent())
    return TrialResult(
        total_ops=sum(breakdown.values()),
        duration_actual=duration,
        per_op_breakdown=breakdown,
        prefill_size=size,
        steady_state_expected_size=config.expected_size(),
        audit_report=report,
        op_logs=logs,
        final_size=len(tree.items()),
    )


def run_trials(config):
    """Warmup trials (discarded) followed by measured trials."""
    for _ in range(config.warmup_trials):
        run_trial(config)
    return [run_trial(config) for _ in range(config.trials)]


def emit_report(results_by_config):
    """Render trial results as CSV text.

    results_by_config is a sequence of (config, results) pairs.  One row
    per trial; the stddev column carries the sample standard deviation
    of throughput across the trials of that configuration.
    """
    if not results_by_config:
        raise ValueError("no results to report")
    lines = ["structure,mix,key_range,threads,trial,total_ops,"
             "duration_s,ops_per_second,prefill_size,group_stddev"]
    for config, results in results_by_config:
        rates = [r.ops_per_second for r in results]
        stddev = statistics.stdev(rates) if len(rates) > 1 else 0.0
        for trial, r in enumerate(results):
            lines.append("%s,%s,%d,%d,%d,%d,%.6f,%.2f,%d,%.2f" % (
                config.variant_label, config.mix_label, config.key_range,
                config.threads, trial, r.total_ops, r.duration_actual,
                r.ops_per_second, r.prefill_size, stddev))
    return "\n".join(lines) + "\n"


@click.command()
@click.option("--mix", default="50,50", metavar="I,D",
              help="insert,delete percentages; gets take the remainder")
@click.option("--key-range", default=10_000, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--seconds", default=5.0, show_default=True,
              help="wall-clock trial length")
@click.option("--ops-budget", default=None, type=int,
              help="fixed op count per trial (deterministic mode)")
@click.option("--trials", default=5, show_default=True)
@click.option("--warmup", default=0, show_default=True)
@click.option("--k-violations", default=0, show_default=True,
              help="violations tolerated on the search path before "
                   "an update rebalances")
@click.option("--seed", default=0, show_default=True)
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="write the CSV here instead of stdout")
@click.option("--audit", is_flag=True,
              help="audit the quiescent structure after each trial")
def main(mix, key_range, threads, seconds, ops_budget, trials, warmup,
         k_violations, seed, csv_path, audit):
    """Benchmark the concurrent ordered map and emit CSV."""
    try:
        insert_pct, delete_pct = (int(x) for x in mix.split(","))
    except ValueError:
        raise click.BadParameter("--mix expects 'I,D', e.g. 50,50")
    config = WorkloadConfig(
        insert_pct=insert_pct,
        delete_pct=delete_pct,
        get_pct=100 - insert_pct - delete_pct,
        key_range=key_range,
        threads=threads,
        trial_seconds=seconds,
        trials=trials,
        violation_threshold=k_violations,
        seed=seed,
        warmup_trials=warmup,
        ops_budget=ops_budget,
        audit=audit,
    )
    results = run_trials(config)
    text = emit_report([(config, results)])
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if audit:
        for i, r in enumerate(results):
            status = "pass" if r.audit_report.ok else "FAIL"
            click.echo("trial %d audit: %s" % (i, status), err=True)
            if not r.audit_report.ok:
                click.echo(r.audit_report.lines(), err=True)
                raise SystemExit(1)


if __name__ == "__main__":
    main()
