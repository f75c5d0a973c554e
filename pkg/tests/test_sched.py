from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import check_consolidation

from lmsched.estimator import UncertaintyScore
from lmsched.fixtures import PRIORITIZATION, search_serial, serial_misses, serial_order
from lmsched.profiles import ModelProfile
from lmsched.sched import (
    BatchPlan,
    Executor,
    Policy,
    SchedulerConfig,
    Task,
    TaskQueue,
    assign_deadline,
    consolidate,
    cut_point,
    offload_decision,
    priority,
    priority_baseline,
    priority_order,
    priority_slack,
    priority_up,
    schedule_step,
)

PROFILE = ModelProfile(name="t", eta=0.05, mu=0.08, batch_size=4, tau=35.0, u_max=40.0)


def task(i, arrival=0.0, budget=3.0, value=0.0, u_max=40.0):
    return Task(id=i, text=f"t{i}", arrival=arrival, deadline=arrival + budget, input_len=10,
                u=UncertaintyScore.from_value(value, u_max))


random_tasks = st.lists(
    st.tuples(st.floats(0, 100), st.floats(0.01, 10), st.floats(0, 80)), min_size=1, max_size=30
).map(lambda rows: [task(i, a, b, v) for i, (a, b, v) in enumerate(rows)])


# --------------------------------------------------------------- deadlines


def test_deadline_tight_and_loose(dialogpt):
    assert assign_deadline(5.0, 10, dialogpt) == pytest.approx(5.8)
    tight = assign_deadline(0.0, 10, dialogpt, 1.0) - 0.0
    assert assign_deadline(0.0, 10, dialogpt, 2.0) == pytest.approx(2 * tight)


def test_user_deadline_wins(dialogpt):
    assert assign_deadline(1.0, 10, dialogpt, user_deadline=9.0) == 9.0


def test_zero_input_rejected(dialogpt):
    with pytest.raises(ValueError):
        assign_deadline(0.0, 0, dialogpt)


def test_task_deadline_after_arrival():
    with pytest.raises(ValueError):
        task(1, arrival=2.0, budget=0.0)


# -------------------------------------------------------------- priorities


def test_slack_priority_example():
    assert priority_slack(task(1, budget=2.0, value=20), PROFILE) == pytest.approx(1.0)
    assert priority_slack(task(1, budget=2.0, value=0), PROFILE) == pytest.approx(0.5)


def test_up_priority_example():
    t = task(1, budget=3.0, value=20, u_max=40.0)
    assert t.u.normalized == 0.5
    assert priority_up(t, SchedulerConfig(alpha=1.0), PROFILE) == pytest.approx(0.25)


def test_up_raw_numerator_mode():
    t = task(1, budget=3.0, value=20)
    assert priority_up(t, SchedulerConfig(numerator_mode="raw"), PROFILE) == pytest.approx((1 - 20) / 2.0)


def test_up_prefers_lower_uncertainty_at_equal_slack():
    prof = replace(PROFILE, eta=1e-9)
    lo, hi = task(1, value=8), task(2, value=32)  # normalized 0.2 and 0.8
    cfg = SchedulerConfig()
    assert priority_up(lo, cfg, prof) > priority_up(hi, cfg, prof)


def test_overdue_tier_most_negative_first():
    cfg = SchedulerConfig(policy=Policy.SLACK)
    ok = task(1, budget=10.0, value=0)
    late = task(2, budget=1.0, value=40)  # slack -1
    later = task(3, budget=1.0, value=60)  # slack -2
    zero = task(4, budget=1.0, value=20)  # slack 0
    order = priority_order([ok, late, later, zero], cfg, PROFILE)
    assert order == [2, 1, 3, 0]
    assert math.isinf(priority(late, cfg, PROFILE))


def test_baselines():
    a, b = task(1, arrival=1.0, value=5), task(2, arrival=2.0, value=9)
    assert priority_order([b, a], SchedulerConfig(policy=Policy.FIFO), PROFILE) == [1, 0]
    assert priority_order([a, b], SchedulerConfig(policy=Policy.LUF), PROFILE) == [0, 1]
    assert priority_order([a, b], SchedulerConfig(policy=Policy.MUF), PROFILE) == [1, 0]
    assert priority_baseline(a, Policy.EDF) == -a.deadline


def test_equal_keys_break_on_arrival_then_id():
    a, b, c = task(3, arrival=1.0, value=5), task(1, arrival=1.0, value=5), task(2, arrival=0.5, value=5)
    for policy in Policy:
        order = priority_order([a, b, c], SchedulerConfig(policy=policy), PROFILE)
        if policy in (Policy.LUF, Policy.MUF):
            assert order == [2, 1, 0]


def test_policy_parse():
    assert Policy.parse("hpf") is Policy.EDF
    assert Policy.parse(" up ") is Policy.UP
    with pytest.raises(ValueError):
        Policy.parse("SJF")


def test_config_validation():
    for bad in ({"lam": 0.5}, {"b": 0.9}, {"k": 1.0}, {"alpha": -1}, {"numerator_mode": "log"}):
        with pytest.raises(ValueError):
            SchedulerConfig(**bad)


@settings(max_examples=100)
@given(random_tasks)
def test_alpha_zero_matches_slack_order(tasks):
    up = priority_order(tasks, SchedulerConfig(policy=Policy.UP, alpha=0.0), PROFILE)
    slack = priority_order(tasks, SchedulerConfig(policy=Policy.SLACK), PROFILE)
    assert up == slack


@given(random_tasks, st.sampled_from(list(Policy)))
def test_queue_pops_in_priority_order(tasks, policy):
    cfg = SchedulerConfig(policy=policy)
    q = TaskQueue(cfg, PROFILE)
    q.extend(tasks)
    popped = [q.pop() for _ in range(len(tasks))]
    assert [t.id for t in popped] == [tasks[i].id for i in priority_order(tasks, cfg, PROFILE)]
    prios = [p.priority for p in popped]
    # non-increasing, except that the overdue tier (inf) comes first
    assert all(x >= y for x, y in zip(prios, prios[1:]) if not math.isinf(x) or math.isinf(y))


# -------------------------------------------------------------- offloading


def test_offload_strict_threshold():
    assert offload_decision(UncertaintyScore.from_value(35.0, 100), 35.0) is Executor.GPU
    assert offload_decision(UncertaintyScore.from_value(35.001, 100), 35.0) is Executor.CPU


# ------------------------------------------------------------ consolidation


def test_cut_on_ratio():
    pending = [task(i, value=v) for i, v in enumerate([1, 1.2, 1.4, 10])]
    plan, back = consolidate(pending, SchedulerConfig(lam=1.5), 4)
    assert plan.task_ids == [0, 1, 2] and [t.id for t in back] == [3]


def test_cut_on_size():
    pending = [task(i, value=5) for i in range(8)]
    plan, back = consolidate(pending, SchedulerConfig(b=2.0), 4)
    assert len(plan.task_ids) == 4 and len(back) == 4


def test_cut_point_checker_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        cap = int(rng.integers(1, 9))
        lam = float(rng.uniform(1.0, 3.0))
        u = sorted(rng.uniform(0.0, 50.0, n).round(1))
        pending = [task(i, value=v) for i, v in enumerate(rng.permutation(u))]
        plan, back = consolidate(pending, SchedulerConfig(lam=lam), cap)
        batch = [next(t.u.value for t in pending if t.id == i) for i in plan.task_ids]
        assert check_consolidation(u, batch, lam, cap) == []
        assert sorted(plan.task_ids + [t.id for t in back]) == list(range(n))


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=12), st.floats(1, 4), st.integers(1, 12))
def test_cut_point_property(u, lam, cap):
    u = sorted(u)
    m = cut_point(u, lam, cap)
    assert check_consolidation(u, u[:m], lam, cap) == []


def test_stage_size_uses_decimal_b():
    assert SchedulerConfig(b=1.6).stage_size(11) == 17
    assert SchedulerConfig(b=1.15).stage_size(20) == 23
    assert SchedulerConfig(policy=Policy.FIFO, b=2.0).stage_size(4) == 4


def test_batch_plan_not_empty():
    with pytest.raises(ValueError):
        BatchPlan(Executor.GPU, [], 0.0)


# ----------------------------------------------------------- schedule_step


def test_single_task_flushes_as_batch_of_one():
    cfg = SchedulerConfig()
    q = TaskQueue(cfg, PROFILE)
    q.push(task(1, value=5))
    assert schedule_step(q, cfg, PROFILE, now=0.0) == [] and len(q) == 1
    plans = schedule_step(q, cfg, PROFILE, now=2.0, flush=True)
    assert [p.task_ids for p in plans] == [[1]] and len(q) == 0


def test_eight_tasks_one_consolidation():
    cfg = SchedulerConfig(b=2.0)
    q = TaskQueue(cfg, PROFILE)
    q.extend(task(i, value=5 + i) for i in range(8))
    plans = schedule_step(q, cfg, PROFILE, now=0.0)
    assert len(plans) == 1 and len(plans[0].task_ids) == 4 and len(q) == 4


def test_schedule_step_routes_over_tau_to_cpu():
    cfg = SchedulerConfig(b=1.0)
    q = TaskQueue(cfg, PROFILE)
    q.extend([task(1, budget=1.0, value=36), task(2, value=3), task(3, value=4), task(4, value=5), task(5, value=5)])
    plans = schedule_step(q, cfg, PROFILE, now=0.0)
    cpu = [p for p in plans if p.executor is Executor.CPU]
    gpu = [p for p in plans if p.executor is Executor.GPU]
    assert [p.task_ids for p in cpu] == [[1]]
    assert sorted(gpu[0].task_ids) == [2, 3, 4, 5]


@given(random_tasks)
def test_no_wrong_side_of_tau(tasks):
    cfg = SchedulerConfig(b=1.0)
    q = TaskQueue(cfg, PROFILE)
    q.extend(tasks)
    by_id = {t.id: t for t in tasks}
    while len(q):
        for plan in schedule_step(q, cfg, PROFILE, now=0.0, flush=True):
            over = [by_id[i].u.value > PROFILE.tau for i in plan.task_ids]
            assert all(over) if plan.executor is Executor.CPU else not any(over)


# ---------------------------------------------------------- serial fixture


def test_prioritization_fixture_direct():
    e, d = PRIORITIZATION.exec_times, PRIORITIZATION.deadlines
    for policy, missed in PRIORITIZATION.expected.items():
        assert serial_misses(e, d, serial_order(e, d, policy)) == missed


def test_serial_search_hits_targets():
    e, d = search_serial(seed=1)
    counts = {p: len(serial_misses(e, d, serial_order(e, d, p))) for p in ("EDF", "LUF", "UP")}
    assert counts == {"EDF": 2, "LUF": 3, "UP": 1}
