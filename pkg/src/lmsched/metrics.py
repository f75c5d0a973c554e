"""Evaluation metrics computed from per-task logs.

Everything here is a pure function of the log rows, so reading a per-task
CSV back and recomputing reproduces the report exactly. Times are written
with 6 decimals, which is lossless because the simulator quantizes every
time to whole microseconds.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

LOG_HEADER = ("task_id", "arrival", "deadline", "uncertainty", "priority", "executor", "batch_id",
              "start", "end", "response", "missed")


class EmptyLog(ValueError):
    pass


class MismatchedWorkloads(ValueError):
    pass


@dataclass
class LogRow:
    task_id: int
    arrival: float
    deadline: float
    uncertainty: float
    priority: float
    executor: str  # "GPU", "CPU" or "" if never started
    batch_id: int  # -1 if never started
    start: float | None
    end: float | None  # None if unfinished at the horizon

    @property
    def finished(self) -> bool:
        return self.end is not None

    @property
    def response(self) -> float | None:
        return None if self.end is None else self.end - self.arrival

    @property
    def missed(self) -> bool:
        return self.end is None or self.end > self.deadline


def _fmt_time(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _fmt_priority(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:.9g}"


def write_log_csv(rows: Sequence[LogRow], target, header_lines: Sequence[str] = ()) -> None:
    """Write rows to a path or text stream; ``header_lines`` become ``#`` comments."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w", newline="", encoding="utf-8") if own else target
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for r in rows:
            writer.writerow([
                r.task_id, _fmt_time(r.arrival), _fmt_time(r.deadline), f"{r.uncertainty:.6f}",
                _fmt_priority(r.priority), r.executor, r.batch_id, _fmt_time(r.start), _fmt_time(r.end),
                _fmt_time(r.response), int(r.missed),
            ])
    finally:
        if own:
            fh.close()


def log_csv_text(rows: Sequence[LogRow], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    write_log_csv(rows, buf, header_lines)
    return buf.getvalue()


def read_log_csv(source) -> list[LogRow]:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) else source.read()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    opt = lambda s: float(s) if s != "" else None  # noqa: E731
    return [
        LogRow(
            task_id=int(rec["task_id"]),
            arrival=float(rec["arrival"]),
            deadline=float(rec["deadline"]),
            uncertainty=float(rec["uncertainty"]),
            priority=float(rec["priority"]),
            executor=rec["executor"],
            batch_id=int(rec["batch_id"]),
            start=opt(rec["start"]),
            end=opt(rec["end"]),
        )
        for rec in reader
    ]


# ---------------------------------------------------------------- metrics


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Smallest value with at least a ``q`` share of the sample at or below it."""
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    if ordered.size == 0:
        raise EmptyLog("no values")
    idx = max(0, math.ceil(Fraction(repr(q)) * ordered.size) - 1)
    return float(ordered[idx])


@dataclass(frozen=True)
class ResponseStats:
    mean: float
    max: float
    p95: float
    count: int
    unfinished: int


def response_stats(rows: Sequence[LogRow]) -> ResponseStats:
    done = [r.response for r in rows if r.finished]
    if not done:
        raise EmptyLog("no finished tasks in log")
    arr = np.asarray(done, dtype=np.float64)
    # math.fsum: exact, so the mean does not depend on row order
    return ResponseStats(math.fsum(done) / arr.size, float(arr.max()), nearest_rank(arr, 0.95), arr.size,
                         len(rows) - arr.size)


def miss_ratio(rows: Sequence[LogRow]) -> float:
    if not rows:
        return 0.0
    return sum(r.missed for r in rows) / len(rows)


def makespan(rows: Sequence[LogRow]) -> float:
    ends = [r.end for r in rows if r.finished]
    if not ends:
        return 0.0
    return max(ends) - min(r.arrival for r in rows)


def throughput(rows: Sequence[LogRow], window: float = 60.0) -> tuple[float, list[int]]:
    """Completions per minute over the makespan and per-window counts."""
    done = [r.end for r in rows if r.finished]
    if not done:
        return 0.0, []
    t0 = min(r.arrival for r in rows)
    span = makespan(rows)
    rate = len(done) / (span / 60.0) if span > 0 else 0.0
    buckets = [int((e - t0) // window) for e in done]
    series = [0] * (max(buckets) + 1)
    for b in buckets:
        series[b] += 1
    return rate, series


def _union_length(intervals) -> float:
    total, cur_s, cur_e = 0.0, None, None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def busy_intervals(rows: Sequence[LogRow], executor: str) -> list[tuple[float, float]]:
    seen = {}
    for r in rows:
        if r.finished and r.executor == executor:
            seen[r.batch_id] = (r.start, r.end)
    return list(seen.values())


def utilization_from_log(rows: Sequence[LogRow]) -> tuple[float, float]:
    span = makespan(rows)
    if span <= 0:
        return 0.0, 0.0
    return (_union_length(busy_intervals(rows, "GPU")) / span, _union_length(busy_intervals(rows, "CPU")) / span)


# ----------------------------------------------------------------- report


def fingerprint(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SimReport:
    log: list = field(repr=False)
    mean_response: float
    max_response: float
    p95_response: float
    throughput: float
    throughput_series: list
    miss_ratio: float
    n_tasks: int
    n_finished: int
    n_unfinished: int
    gpu_utilization: float
    cpu_utilization: float
    makespan: float
    config_fingerprint: str = ""
    workload_fingerprint: str = ""
    seed: int = 0
    config: dict = field(default_factory=dict, repr=False)

    @property
    def responses(self) -> np.ndarray:
        return np.array([r.response for r in self.log if r.finished])

    def summary(self) -> dict:
        return {
            "mean_response": self.mean_response,
            "max_response": self.max_response,
            "p95_response": self.p95_response,
            "throughput_per_min": self.throughput,
            "throughput_series": self.throughput_series,
            "miss_ratio": self.miss_ratio,
            "n_tasks": self.n_tasks,
            "n_finished": self.n_finished,
            "n_unfinished": self.n_unfinished,
            "gpu_utilization": self.gpu_utilization,
            "cpu_utilization": self.cpu_utilization,
            "makespan": self.makespan,
            "config_fingerprint": self.config_fingerprint,
            "workload_fingerprint": self.workload_fingerprint,
            "seed": self.seed,
            "config": self.config,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def build_report(rows: Sequence[LogRow], config: dict | None = None, workload_fingerprint: str = "",
                 seed: int = 0) -> SimReport:
    rows = list(rows)
    if any(r.finished for r in rows):
        stats = response_stats(rows)
        mean, mx, p95 = stats.mean, stats.max, stats.p95
    else:
        mean = mx = p95 = math.nan
    rate, series = throughput(rows)
    gpu, cpu = utilization_from_log(rows)
    finished = sum(r.finished for r in rows)
    config = dict(config or {})
    return SimReport(
        log=rows,
        mean_response=mean,
        max_response=mx,
        p95_response=p95,
        throughput=rate,
        throughput_series=series,
        miss_ratio=miss_ratio(rows),
        n_tasks=len(rows),
        n_finished=finished,
        n_unfinished=len(rows) - finished,
        gpu_utilization=gpu,
        cpu_utilization=cpu,
        makespan=makespan(rows),
        config_fingerprint=fingerprint(config),
        workload_fingerprint=workload_fingerprint,
        seed=seed,
        config=config,
    )


# ------------------------------------------------------------- comparison

COMPARE_METRICS = ("mean_response", "p95_response", "max_response", "miss_ratio", "throughput")


@dataclass
class Comparison:
    metrics: dict  # policy -> metric -> value
    deltas: dict  # policy -> metric -> percent change vs baseline
    baseline: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["policy", *COMPARE_METRICS, *(f"{m}_delta_pct" for m in COMPARE_METRICS)])
        for policy, values in self.metrics.items():
            writer.writerow([
                policy,
                *(f"{values[m]:.6f}" for m in COMPARE_METRICS),
                *(f"{self.deltas[policy][m]:.2f}" for m in COMPARE_METRICS),
            ])
        return buf.getvalue()


def _delta(value: float, base: float) -> float:
    if base == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return 100.0 * (value - base) / base


def compare_values(metrics: Mapping[str, Mapping[str, float]], baseline: str = "FIFO") -> Comparison:
    if baseline not in metrics:
        baseline = next(iter(metrics))
    base = metrics[baseline]
    deltas = {p: {m: _delta(v[m], base[m]) for m in COMPARE_METRICS} for p, v in metrics.items()}
    return Comparison({p: dict(v) for p, v in metrics.items()}, deltas, baseline)


def compare_report(reports: Mapping[str, SimReport], baseline: str = "FIFO") -> Comparison:
    """Metrics per policy with percent deltas against ``baseline``."""
    if not reports:
        raise ValueError("nothing to compare")
    prints = {r.workload_fingerprint for r in reports.values()}
    if len(prints) > 1:
        raise MismatchedWorkloads(f"reports come from different workloads: {sorted(prints)}")
    values = {
        name: {
            "mean_response": r.mean_response,
            "p95_response": r.p95_response,
            "max_response": r.max_response,
            "miss_ratio": r.miss_ratio,
            "throughput": r.throughput,
        }
        for name, r in reports.items()
    }
    return compare_values(values, baseline)
