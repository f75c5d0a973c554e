"""Task priorities, dynamic consolidation and the offload decision.

Priorities are static once a task's uncertainty is known: every formula
here depends on release time, deadline and estimated length only, never on
the current clock. That lets the simulator rank tasks once up front.

Ordering convention: higher priority pops first. Tasks whose estimated
slack is at most ``OVERDUE_EPS`` form an overdue tier that outranks every
positive-slack task, most negative slack first. Remaining ties break on
earlier arrival, then lower id.
"""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .estimator import UncertaintyScore
from .profiles import ModelProfile

OVERDUE_EPS = 1e-6


class Policy(str, enum.Enum):
    FIFO = "FIFO"
    EDF = "EDF"
    LUF = "LUF"
    MUF = "MUF"
    SLACK = "SLACK"
    UP = "UP"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        key = name.strip().upper()
        if key == "HPF":  # priority-point first is EDF on assigned deadlines
            key = "EDF"
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown policy {name!r}; choose from {[p.value for p in cls]}") from None


class Executor(str, enum.Enum):
    GPU = "GPU"
    CPU = "CPU"


@dataclass
class Task:
    """A request as the scheduler sees it.

    The observed output length is deliberately absent; the simulator keeps
    it on its side of the interface.
    """

    id: int
    text: str
    arrival: float
    deadline: float
    input_len: int
    u: UncertaintyScore
    priority: float = 0.0
    state: str = "queued"
    start: float | None = None
    end: float | None = None

    def __post_init__(self):
        if not self.deadline > self.arrival:
            raise ValueError(f"task {self.id}: deadline {self.deadline} must be after arrival {self.arrival}")


@dataclass(frozen=True)
class SchedulerConfig:
    policy: Policy = Policy.UP
    alpha: float = 1.0
    lam: float = 1.5
    b: float = 1.6
    k: float = 0.9
    numerator_mode: str = "normalized"
    consolidate: bool | None = None
    offload: bool | None = None

    def __post_init__(self):
        if not isinstance(self.policy, Policy):
            object.__setattr__(self, "policy", Policy.parse(str(self.policy)))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if not 0 < self.k < 1:
            raise ValueError("k must lie in (0, 1)")
        if self.numerator_mode not in ("normalized", "raw"):
            raise ValueError("numerator_mode must be 'normalized' or 'raw'")

    @property
    def consolidating(self) -> bool:
        return self.policy is Policy.UP if self.consolidate is None else self.consolidate

    @property
    def offloading(self) -> bool:
        return self.policy is Policy.UP if self.offload is None else self.offload

    def stage_size(self, batch_size: int) -> int:
        """Tasks staged before a batch is cut: ``floor(b * C)`` when consolidating."""
        if not self.consolidating:
            return batch_size
        # decimal b as written, so 1.15 * 20 stages 23 and not 22
        return max(batch_size, math.floor(Fraction(repr(self.b)) * batch_size))

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "alpha": self.alpha,
            "lam": self.lam,
            "b": self.b,
            "k": self.k,
            "numerator_mode": self.numerator_mode,
            "consolidate": self.consolidating,
            "offload": self.offloading,
        }


@dataclass
class BatchPlan:
    executor: Executor
    task_ids: list
    formed_at: float

    def __post_init__(self):
        if not self.task_ids:
            raise ValueError("empty batch")


# --------------------------------------------------------------- deadlines


def assign_deadline(
    arrival: float,
    input_len: int,
    profile: ModelProfile,
    tightness: float = 1.0,
    user_deadline: float | None = None,
) -> float:
    """``arrival + tightness * mu * |J|``; an explicit deadline wins."""
    if user_deadline is not None:
        return user_deadline
    if input_len < 1:
        raise ValueError("input length must be >= 1 token")
    return arrival + tightness * profile.mu * input_len


# -------------------------------------------------------------- priorities


def estimated_slack(task: Task, profile: ModelProfile) -> float:
    return task.deadline - task.arrival - profile.eta * task.u.value


def priority_slack(task: Task, profile: ModelProfile) -> float:
    zeta = estimated_slack(task, profile)
    return math.inf if zeta <= OVERDUE_EPS else 1.0 / zeta


def priority_up(task: Task, cfg: SchedulerConfig, profile: ModelProfile) -> float:
    zeta = estimated_slack(task, profile)
    if zeta <= OVERDUE_EPS:
        return math.inf
    u_term = task.u.normalized if cfg.numerator_mode == "normalized" else task.u.value
    return (1.0 - cfg.alpha * u_term) / zeta


def priority_baseline(task: Task, policy: Policy) -> float:
    if policy is Policy.FIFO:
        return -task.arrival
    if policy is Policy.EDF:
        return -task.deadline
    if policy is Policy.LUF:
        return -task.u.value
    if policy is Policy.MUF:
        return task.u.value
    raise ValueError(f"{policy} is not a baseline policy")


def priority(task: Task, cfg: SchedulerConfig, profile: ModelProfile) -> float:
    if cfg.policy is Policy.UP:
        return priority_up(task, cfg, profile)
    if cfg.policy is Policy.SLACK:
        return priority_slack(task, profile)
    return priority_baseline(task, cfg.policy)


def sort_key(task: Task, cfg: SchedulerConfig, profile: ModelProfile) -> tuple:
    """Ascending key; the smallest key is the highest-priority task."""
    if cfg.policy in (Policy.UP, Policy.SLACK):
        zeta = estimated_slack(task, profile)
        if zeta <= OVERDUE_EPS:
            return (0, zeta, task.arrival, task.id)
    return (1, -priority(task, cfg, profile), task.arrival, task.id)


def priority_order(tasks: Sequence[Task], cfg: SchedulerConfig, profile: ModelProfile) -> list[int]:
    """Indices of ``tasks`` from highest to lowest priority."""
    keys = [sort_key(t, cfg, profile) for t in tasks]
    return sorted(range(len(tasks)), key=keys.__getitem__)


# ------------------------------------------------------------- offloading


def offload_decision(u: UncertaintyScore, tau: float) -> Executor:
    return Executor.CPU if u.value > tau else Executor.GPU


# ------------------------------------------------------------ consolidation


def cut_point(sorted_u: Sequence[float], lam: float, cap: int) -> int:
    """Length of the accepted prefix of ascending uncertainties.

    Accept while fewer than ``cap`` are taken and each value is at most
    ``lam`` times the previously accepted one. The first is always taken.
    """
    if not sorted_u:
        return 0
    count, prev = 1, sorted_u[0]
    for value in sorted_u[1:]:
        if count >= cap or value > lam * prev:
            break
        count += 1
        prev = value
    return count


def consolidate(pending: Sequence[Task], cfg: SchedulerConfig, batch_size: int, now: float = 0.0):
    """Cut one GPU batch of similar uncertainty out of the staged tasks.

    Returns the batch plan and the tasks handed back to the queue.
    """
    ordered = sorted(pending, key=lambda t: t.u.value)  # stable: priority order breaks ties
    count = cut_point([t.u.value for t in ordered], cfg.lam, batch_size)
    batch = ordered[:count]
    return BatchPlan(Executor.GPU, [t.id for t in batch], now), list(ordered[count:])


@dataclass
class TaskQueue:
    cfg: SchedulerConfig
    profile: ModelProfile
    _heap: list = field(default_factory=list)

    def push(self, task: Task) -> None:
        task.priority = priority(task, self.cfg, self.profile)
        task.state = "queued"
        heapq.heappush(self._heap, (sort_key(task, self.cfg, self.profile), task))

    def extend(self, tasks: Iterable[Task]) -> None:
        for task in tasks:
            self.push(task)

    def pop(self) -> Task:
        return heapq.heappop(self._heap)[1]

    def peek(self) -> Task:
        return self._heap[0][1]

    def __len__(self) -> int:
        return len(self._heap)


def schedule_step(queue: TaskQueue, cfg: SchedulerConfig, profile: ModelProfile, now: float, flush: bool = False):
    """One pass of the online loop; forms at most one GPU batch.

    Tasks are popped in priority order. With offloading on, those whose
    uncertainty exceeds ``tau`` become single-task CPU plans. Others are
    staged until ``cfg.stage_size`` is reached, then consolidated (or taken
    whole for static batching). With ``flush`` a short staged set is
    dispatched as is; otherwise it goes back to the queue.
    """
    plans = []
    staged: list[Task] = []
    target = cfg.stage_size(profile.batch_size)
    while len(queue) and len(staged) < target:
        task = queue.pop()
        if cfg.offloading and offload_decision(task.u, profile.tau) is Executor.CPU:
            task.state = "offloaded_cpu"
            plans.append(BatchPlan(Executor.CPU, [task.id], now))
        else:
            staged.append(task)
    if not staged or (len(staged) < target and not flush):
        queue.extend(staged)
        return plans
    if cfg.consolidating:
        plan, returned = consolidate(staged, cfg, profile.batch_size, now)
    else:
        plan, returned = BatchPlan(Executor.GPU, [t.id for t in staged[: profile.batch_size]], now), staged[profile.batch_size :]
    for task in staged:
        if task.id in plan.task_ids:
            task.state = "batched_gpu"
    queue.extend(returned)
    plans.append(plan)
    return plans
