from __future__ import annotations

import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lmsched.metrics import (
    COMPARE_METRICS,
    EmptyLog,
    LogRow,
    MismatchedWorkloads,
    build_report,
    compare_report,
    log_csv_text,
    miss_ratio,
    read_log_csv,
    response_stats,
    throughput,
)
from lmsched.sched import Policy, SchedulerConfig
from lmsched.sim.engine import SimConfig, run_sim
from test_sim import PROFILE, fresh, make_tasks


def row(i, arrival, end, deadline=100.0, executor="GPU", batch=None):
    return LogRow(task_id=i, arrival=arrival, deadline=deadline, uncertainty=1.0, priority=0.5,
                  executor=executor if end is not None else "", batch_id=i if batch is None else batch,
                  start=None if end is None else arrival, end=end)


rows_st = st.lists(
    st.tuples(st.floats(0, 1000), st.floats(0.001, 50), st.floats(0.001, 60), st.booleans()),
    min_size=1, max_size=40,
).map(lambda xs: [row(i, a, a + r if done else None, a + d) for i, (a, r, d, done) in enumerate(xs)])


def test_response_stats_small():
    s = response_stats([row(1, 0.0, 1.0), row(2, 0.0, 2.0), row(3, 0.0, 3.0)])
    assert (s.mean, s.max, s.p95) == (2.0, 3.0, 3.0)


def test_response_stats_single():
    s = response_stats([row(1, 1.0, 3.5)])
    assert s.mean == s.max == s.p95 == 2.5


def test_response_stats_empty():
    with pytest.raises(EmptyLog):
        response_stats([])
    with pytest.raises(EmptyLog):
        response_stats([row(1, 0.0, None)])


def test_p95_sort_oracle():
    rng = np.random.default_rng(0)
    resp = rng.exponential(2.0, 10_000)
    s = response_stats([row(i, 0.0, float(r)) for i, r in enumerate(resp)])
    assert s.p95 == sorted(resp)[9499]
    assert s.unfinished == 0


def test_unfinished_excluded_from_mean_but_missed():
    rows = [row(1, 0.0, 1.0), row(2, 0.0, None)]
    s = response_stats(rows)
    assert s.mean == 1.0 and s.unfinished == 1
    assert miss_ratio(rows) == 0.5


def test_miss_ratio_extremes():
    assert miss_ratio([row(i, 0.0, 1.0, deadline=2.0) for i in range(5)]) == 0.0
    assert miss_ratio([row(i, 0.0, 3.0, deadline=2.0) for i in range(5)]) == 1.0


def test_throughput_examples():
    rows = [row(i, 0.0, 120.0 * (i + 1) / 60) for i in range(60)]
    rate, series = throughput(rows)
    assert rate == pytest.approx(30.0)
    assert sum(series) == 60
    assert throughput([row(1, 0.0, None)]) == (0.0, [])


@given(rows_st)
def test_report_invariants(rows):
    rep = build_report(rows)
    assert 0 <= rep.miss_ratio <= 1
    assert rep.throughput >= 0
    assert sum(rep.throughput_series) == rep.n_finished
    if rep.n_finished:
        assert rep.max_response >= rep.p95_response
        assert rep.mean_response >= 0


@given(rows_st, st.floats(0.0, 20.0))
def test_miss_ratio_monotone_under_tightening(rows, cut):
    tighter = [replace(r, deadline=r.deadline - cut) for r in rows]
    assert miss_ratio(tighter) >= miss_ratio(rows)


def test_compare_identical_logs_zero_delta():
    rows = [row(i, float(i), i + 1.5) for i in range(10)]
    rep = build_report(rows, workload_fingerprint="w")
    cmp = compare_report({"FIFO": rep, "UP": rep})
    assert all(v == 0 for v in cmp.deltas["UP"].values())


def test_compare_thirty_percent():
    fifo = build_report([row(1, 0.0, 2.0)], workload_fingerprint="w")
    up = build_report([row(1, 0.0, 1.4)], workload_fingerprint="w")
    cmp = compare_report({"FIFO": fifo, "UP": up})
    assert cmp.deltas["UP"]["mean_response"] == pytest.approx(-30.0)
    lines = cmp.to_csv().splitlines()
    assert lines[0].split(",")[: 1 + len(COMPARE_METRICS)] == ["policy", *COMPARE_METRICS]
    assert len(lines) == 3


def test_compare_mismatched_workloads():
    a = build_report([row(1, 0.0, 1.0)], workload_fingerprint="a")
    b = build_report([row(1, 0.0, 1.0)], workload_fingerprint="b")
    with pytest.raises(MismatchedWorkloads):
        compare_report({"FIFO": a, "EDF": a, "UP": b})


def test_csv_recompute_reproduces_report():
    tasks = make_tasks(12, n=150, rate=3.0)
    for policy in (Policy.FIFO, Policy.UP):
        res = run_sim(fresh(tasks), SchedulerConfig(policy=policy), PROFILE, SimConfig(cpu_lanes=2))
        text = log_csv_text(res.log, ["a comment"])
        back = build_report(read_log_csv(io.StringIO(text)), res.report.config, res.report.workload_fingerprint,
                            res.report.seed)
        assert back.summary() == res.report.summary()


def test_csv_header_and_format():
    text = log_csv_text([row(1, 0.5, 1.25, deadline=2.0), row(2, 0.5, None)], ["seed 3"])
    lines = text.splitlines()
    assert lines[0] == "# seed 3"
    assert lines[1] == "task_id,arrival,deadline,uncertainty,priority,executor,batch_id,start,end,response,missed"
    assert lines[2] == "1,0.500000,2.000000,1.000000,0.5,GPU,1,0.500000,1.250000,0.750000,0"
    assert lines[3].endswith(",,,,1")
