"""Tests for the benchmark driver and its CLI."""

import pytest
from click.testing import CliRunner
from scipy import stats

from chromatree.bench_cli import (
    WorkloadConfig,
    _OpStream,
    _rng,
    emit_report,
    main,
    prefill,
    run_trial,
    run_trials,
)
from chromatree.chromatic_tree import ChromaticMap


def config(**overrides):
    base = dict(insert_pct=50, delete_pct=50, get_pct=0, key_range=1000,
                threads=1, trials=1, seed=0, ops_budget=2000)
    base.update(overrides)
    return WorkloadConfig(**base)


# ---------------------------------------------------------------------------
# configuration

def test_mix_must_sum_to_100():
    with pytest.raises(ValueError):
        config(insert_pct=50, delete_pct=50, get_pct=10)


def test_key_range_must_be_positive():
    with pytest.raises(ValueError):
        config(key_range=0)


def test_labels():
    c = config(insert_pct=20, delete_pct=10, get_pct=70,
               violation_threshold=6)
    assert c.mix_label == "20i-10d"
    assert c.variant_label == "chromatic-k6"


def test_expected_sizes_per_mix():
    assert config(key_range=1000).expected_size() == 500
    c = config(insert_pct=20, delete_pct=10, get_pct=70, key_range=300)
    assert c.expected_size() == 200
    c = config(insert_pct=0, delete_pct=0, get_pct=100, key_range=100)
    assert c.expected_size() == 50


# ---------------------------------------------------------------------------
# operation streams

def test_mix_fidelity_within_one_percent():
    c = config(insert_pct=20, delete_pct=10, get_pct=70)
    stream = _OpStream(_rng(c, 0), c)
    n = 100_000
    counts = {"insert": 0, "delete": 0, "get": 0}
    for _ in range(n):
        op, _ = stream.next()
        counts[op] += 1
    assert abs(counts["insert"] / n - 0.20) < 0.01
    assert abs(counts["delete"] / n - 0.10) < 0.01
    assert abs(counts["get"] / n - 0.70) < 0.01


def test_key_uniformity_chi_squared():
    c = config(key_range=100)
    stream = _OpStream(_rng(c, 0), c)
    n = 100_000
    counts = [0] * c.key_range
    for _ in range(n):
        _, key = stream.next()
        counts[key] += 1
    result = stats.chisquare(counts)
    assert result.pvalue > 0.001, "uniformity rejected: p=%g" % result.pvalue


def test_streams_differ_across_threads_but_not_runs():
    c = config()
    first = [_OpStream(_rng(c, 0), c).next() for _ in range(50)]
    again = [_OpStream(_rng(c, 0), c).next() for _ in range(50)]
    other = [_OpStream(_rng(c, 1), c).next() for _ in range(50)]
    assert first == again
    assert first != other


# ---------------------------------------------------------------------------
# prefill

@pytest.mark.parametrize("mix,key_range,expected", [
    ((50, 50, 0), 10_000, 5000),
    ((20, 10, 70), 300, 200),
    ((0, 0, 100), 100, 50),
])
def test_prefill_reaches_the_five_percent_band(mix, key_range, expected):
    insert_pct, delete_pct, get_pct = mix
    c = config(insert_pct=insert_pct, delete_pct=delete_pct,
               get_pct=get_pct, key_range=key_range)
    tree = ChromaticMap()
    size = prefill(tree, c)
    assert abs(size - expected) <= 0.05 * expected
    assert len(tree.items()) == size


def test_prefill_times_out_when_unreachable():
    tree = ChromaticMap()
    with pytest.raises(TimeoutError):
        prefill(tree, config(key_range=1000), max_ops=10)


# ---------------------------------------------------------------------------
# trials

def test_budget_mode_is_deterministic():
    c = config(threads=2, ops_budget=2000, seed=42)
    a = run_trial(c)
    b = run_trial(c)
    assert a.total_ops == b.total_ops == 2000
    assert a.per_op_breakdown == b.per_op_breakdown
    assert a.ops_per_second > 0
    # with a single worker even the final contents are reproducible
    c1 = config(threads=1, ops_budget=2000, seed=42)
    assert run_trial(c1).final_size == run_trial(c1).final_size


def test_no_lost_updates_in_budget_mode():
    c = config(threads=2, ops_budget=4000, seed=7, record_ops=True)
    result = run_trial(c)
    from chromatree.chromatic_tree import ABSENT
    net = 0
    for log in result.op_logs:
        for op, _key, outcome in log:
            if op == "insert" and outcome is ABSENT:
                net += 1
            elif op == "delete" and outcome is not ABSENT:
                net -= 1
    assert result.final_size == result.prefill_size + net


def test_warmup_trials_are_discarded():
    c = config(trials=2, warmup_trials=1, ops_budget=500)
    results = run_trials(c)
    assert len(results) == 2


def test_audited_trial_attaches_a_report():
    c = config(ops_budget=500, audit=True)
    result = run_trial(c)
    assert result.audit_report is not None
    assert result.audit_report.ok, result.audit_report.lines()


# ---------------------------------------------------------------------------
# reporting

def fake_result(rate):
    from chromatree.bench_cli import TrialResult
    return TrialResult(total_ops=int(rate), duration_actual=1.0,
                       per_op_breakdown={}, prefill_size=10,
                       steady_state_expected_size=10)


def test_report_single_trial_is_two_lines():
    text = emit_report([(config(), [fake_result(1000)])])
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("structure,mix,key_range,threads,trial,")


def test_report_five_trials_times_two_variants_is_eleven_lines():
    k0 = config(trials=5)
    k6 = config(trials=5, violation_threshold=6)
    results = [fake_result(1000 + i) for i in range(5)]
    text = emit_report([(k0, results), (k6, results)])
    assert len(text.strip().splitlines()) == 11


def test_report_stddev_matches_recomputation():
    import statistics
    rates = [1000.0, 1200.0, 900.0]
    text = emit_report([(config(trials=3),
                         [fake_result(r) for r in rates])])
    rows = text.strip().splitlines()[1:]
    reported = {float(row.split(",")[-1]) for row in rows}
    assert len(reported) == 1
    got_rates = [float(row.split(",")[7]) for row in rows]
    assert reported.pop() == pytest.approx(statistics.stdev(got_rates),
                                           abs=0.01)


def test_report_requires_results():
    with pytest.raises(ValueError):
        emit_report([])


# ---------------------------------------------------------------------------
# command line

def test_cli_writes_csv(tmp_path):
    out = tmp_path / "bench.csv"
    runner = CliRunner()
    result = runner.invoke(main, [
        "--mix", "50,50", "--key-range", "500", "--threads", "1",
        "--ops-budget", "500", "--trials", "1", "--csv", str(out),
    ])
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("chromatic-k0,50i-50d,500,1,0,500,")


def test_cli_rejects_bad_mix():
    result = CliRunner().invoke(main, ["--mix", "oops"])
    assert result.exit_code != 0


def test_cli_prints_csv_to_stdout():
    result = CliRunner().invoke(main, [
        "--key-range", "200", "--ops-budget", "200", "--trials", "1",
    ])
    assert result.exit_code == 0, result.output
    assert result.output.startswith("structure,mix,")
