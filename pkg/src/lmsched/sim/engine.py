"""Discrete-event simulation of one GPU batch executor and a CPU lane pool.

The latency model stands in for real inference: a task's cost grows
linearly with its true output length, a GPU batch runs until its longest
member finishes, and a CPU lane runs one task at a time ``cpu_slowdown``
times slower than the GPU.

Times are quantized to whole microseconds before they reach the event
loop, which runs on integers. The loop itself lives in
:mod:`lmsched.sim.kernel` (compiled when available).
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .. import sched
from ..metrics import LogRow, SimReport, build_report, fingerprint
from ..profiles import ModelProfile
from ..sched import SchedulerConfig, Task
from ..workload import apply_wait_interval
from . import kernel

US = 1_000_000
NO_HORIZON = 2**62


class HorizonExceeded(RuntimeWarning):
    """Some tasks were still unfinished when the horizon was reached."""


def to_us(seconds: float) -> int:
    return int(round(seconds * US))


@dataclass(frozen=True)
class SimConfig:
    xi: float = 2.0
    cpu_lanes: int = 4
    horizon: float | None = None
    decision_overhead: float = 0.0
    kernel: str = "auto"  # auto | python | compiled

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if self.cpu_lanes < 1:
            raise ValueError("need at least one CPU lane")
        if self.decision_overhead < 0:
            raise ValueError("decision_overhead must be >= 0")
        if self.kernel not in ("auto", "python", "compiled"):
            raise ValueError("kernel must be auto, python or compiled")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimTask:
    """A scheduler task plus what only the simulator may know."""

    task: Task
    true_output_len: int
    malicious: bool = False

    def __post_init__(self):
        if self.true_output_len < 1:
            raise ValueError(f"task {self.task.id}: output length must be >= 1")


def exec_latency_single(true_output_len: int, executor: sched.Executor | str, profile: ModelProfile) -> float:
    if true_output_len < 1:
        raise ValueError("output length must be >= 1")
    gpu = profile.base_latency_gpu + profile.eta * true_output_len
    return gpu if sched.Executor(executor) is sched.Executor.GPU else profile.cpu_slowdown * gpu


def exec_latency_batch(lengths: Sequence[int], profile: ModelProfile) -> float:
    if not lengths:
        raise ValueError("empty batch")
    return profile.batch_setup + exec_latency_single(max(lengths), sched.Executor.GPU, profile)


@dataclass(frozen=True)
class BatchRecord:
    batch_id: int
    executor: str
    lane: int
    start: float
    end: float
    size: int


@dataclass
class SimResult:
    log: list
    batches: list
    report: SimReport

    @property
    def unfinished(self) -> list[int]:
        return [r.task_id for r in self.log if not r.finished]


def workload_fingerprint(tasks: Sequence[SimTask]) -> str:
    return fingerprint([
        (t.task.id, to_us(t.task.arrival), to_us(t.task.deadline), t.true_output_len) for t in tasks
    ])


def _select_kernel(name: str):
    if name == "python":
        return kernel.python_simulate
    if name == "compiled":
        if kernel.compiled_simulate is None:
            raise RuntimeError("compiled simulation kernel is not available")
        return kernel.compiled_simulate
    return kernel.simulate


def run_sim(
    tasks: Sequence[SimTask],
    cfg: SchedulerConfig,
    profile: ModelProfile,
    sim: SimConfig | None = None,
    seed: int = 0,
) -> SimResult:
    """Simulate ``tasks`` (sorted by arrival) to completion or the horizon.

    Tasks that have not completed by the horizon (including any arriving
    after it) are logged as unfinished and count as misses.

    GPU tasks wait in a priority queue. When the GPU is idle and either a
    full staging set is queued or the arrival window of the oldest waiting
    task has closed, the top of the queue is staged and one batch is cut
    from it (consolidated or static); the rest go back. Offloaded tasks
    join the CPU queue on arrival and take the lowest free lane.
    """
    sim = sim or SimConfig()
    tasks = list(tasks)
    arrivals = [t.task.arrival for t in tasks]
    if any(b < a for a, b in zip(arrivals, arrivals[1:])):
        raise ValueError("tasks must be sorted by arrival")

    plain = [t.task for t in tasks]
    for t in plain:
        t.priority = sched.priority(t, cfg, profile)
    order = sched.priority_order(plain, cfg, profile)
    rank = np.empty(len(tasks), dtype=np.int64)
    rank[order] = np.arange(len(tasks))

    arrival_us = np.array([to_us(a) for a in arrivals], dtype=np.int64)
    flush_us = np.empty(len(tasks), dtype=np.int64)
    for ep in apply_wait_interval(arrival_us.tolist(), to_us(sim.xi)):
        flush_us[ep.first : ep.last + 1] = ep.close
    gpu_us = np.array([to_us(profile.eta * t.true_output_len) for t in tasks], dtype=np.int64)
    cpu_us = np.array([to_us(exec_latency_single(t.true_output_len, "CPU", profile)) for t in tasks], dtype=np.int64)
    u = np.array([t.u.value for t in plain], dtype=np.float64)
    to_cpu = np.array(
        [cfg.offloading and sched.offload_decision(t.u, profile.tau) is sched.Executor.CPU for t in plain],
        dtype=np.uint8,
    )
    horizon_us = NO_HORIZON if sim.horizon is None else to_us(sim.horizon)

    simulate = _select_kernel(sim.kernel)
    start, end, executor, _lane, batch, raw_batches = simulate(
        arrival_us, flush_us, rank, u, gpu_us, cpu_us, to_cpu,
        cfg.stage_size(profile.batch_size), profile.batch_size, float(cfg.lam), cfg.consolidating,
        to_us(profile.batch_setup) + to_us(profile.base_latency_gpu), to_us(sim.decision_overhead),
        sim.cpu_lanes, horizon_us,
    )

    names = ("GPU", "CPU")
    rows = []
    for i, t in enumerate(plain):
        done = end[i] >= 0 and end[i] <= horizon_us
        rows.append(LogRow(
            task_id=t.id,
            arrival=arrival_us[i] / US,
            deadline=to_us(t.deadline) / US,
            uncertainty=t.u.value,
            priority=t.priority,
            executor=names[executor[i]] if executor[i] >= 0 else "",
            batch_id=batch[i],
            start=start[i] / US if start[i] >= 0 else None,
            end=end[i] / US if done else None,
        ))
        t.start = rows[-1].start
        t.end = rows[-1].end
        t.state = "done" if done else "unfinished"
    batches = [BatchRecord(b, names[e], ln, s / US, f / US, size) for b, e, ln, s, f, size in raw_batches]

    config = {"scheduler": cfg.to_dict(), "profile": profile.to_dict(), "sim": sim.to_dict(), "seed": seed}
    config["sim"].pop("kernel")  # both kernels give identical results
    report = build_report(rows, config, workload_fingerprint(tasks), seed)
    if report.n_unfinished:
        warnings.warn(f"{report.n_unfinished} task(s) unfinished at the horizon", HorizonExceeded, stacklevel=2)
    return SimResult(rows, batches, report)


def utilization(report: SimReport) -> tuple[float, float]:
    """GPU and CPU busy fractions of the makespan."""
    return report.gpu_utilization, report.cpu_utilization
