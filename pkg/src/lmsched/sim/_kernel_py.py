"""Pure-Python event loop; the reference for the compiled ``_kernel``.

All times are integer microseconds, so both implementations agree bit for
bit. Inputs are per-task arrays sorted by arrival:

arrival_us, flush_us
    release time and the earliest time a short batch holding this task
    may be flushed.
rank
    position in the static priority order (0 = highest); unique.
u
    estimated uncertainty used for consolidation.
gpu_us, cpu_us
    length-dependent GPU latency share and full CPU latency.
to_cpu
    1 if the task is routed to the CPU pool on arrival.

Returns ``(start, end, executor, lane, batch, batches)`` where the first
five are lists (``-1`` = never happened) and ``batches`` holds
``(batch_id, executor, lane, start, end, size)`` tuples.
"""
from __future__ import annotations

from heapq import heappop, heappush

from ..sched import cut_point

KIND = "python"


def simulate(
    arrival_us,
    flush_us,
    rank,
    u,
    gpu_us,
    cpu_us,
    to_cpu,
    stage_size,
    cap,
    lam,
    consolidate,
    fixed_us,
    overhead_us,
    lanes,
    horizon_us,
):
    n = len(arrival_us)
    arrival_us = [int(v) for v in arrival_us]
    flush_us = [int(v) for v in flush_us]
    rank = [int(v) for v in rank]
    u = [float(v) for v in u]
    gpu_us = [int(v) for v in gpu_us]
    cpu_us = [int(v) for v in cpu_us]
    to_cpu = [bool(v) for v in to_cpu]

    start = [-1] * n
    end = [-1] * n
    executor = [-1] * n
    lane_of = [-1] * n
    batch_of = [-1] * n
    batches = []
    if n == 0:
        return start, end, executor, lane_of, batch_of, batches

    index_of = [0] * n
    for i, r in enumerate(rank):
        index_of[r] = i

    gpu_q: list[int] = []
    cpu_q: list[int] = []
    waiting = [False] * n
    oldest = 0
    nxt = 0
    gpu_busy = False
    gpu_free = 0
    lane_busy = [False] * lanes
    lane_free = [0] * lanes
    next_batch = 0
    now = arrival_us[0]

    while True:
        # completions and arrivals at `now`
        if gpu_busy and gpu_free == now:
            gpu_busy = False
        for ln in range(lanes):
            if lane_busy[ln] and lane_free[ln] == now:
                lane_busy[ln] = False
        while nxt < n and arrival_us[nxt] == now:
            if to_cpu[nxt]:
                heappush(cpu_q, rank[nxt])
            else:
                heappush(gpu_q, rank[nxt])
                waiting[nxt] = True
            nxt += 1

        # CPU pool: highest priority first, lowest free lane
        for ln in range(lanes):
            if not cpu_q:
                break
            if lane_busy[ln]:
                continue
            i = index_of[heappop(cpu_q)]
            finish = now + cpu_us[i] + overhead_us
            start[i], end[i], executor[i], lane_of[i], batch_of[i] = now, finish, 1, ln, next_batch
            batches.append((next_batch, 1, ln, now, finish, 1))
            next_batch += 1
            lane_busy[ln] = True
            lane_free[ln] = finish

        # GPU
        if not gpu_busy and gpu_q:
            while not waiting[oldest]:
                oldest += 1
            if len(gpu_q) >= stage_size or now >= flush_us[oldest]:
                staged = [heappop(gpu_q) for _ in range(min(stage_size, len(gpu_q)))]
                if consolidate:
                    staged.sort(key=lambda r: (u[index_of[r]], r))
                    count = cut_point([u[index_of[r]] for r in staged], lam, cap)
                else:
                    count = min(cap, len(staged))
                for r in staged[count:]:
                    heappush(gpu_q, r)
                members = [index_of[r] for r in staged[:count]]
                finish = now + fixed_us + max(gpu_us[i] for i in members) + overhead_us * count
                for i in members:
                    start[i], end[i], executor[i], lane_of[i], batch_of[i] = now, finish, 0, 0, next_batch
                    waiting[i] = False
                batches.append((next_batch, 0, 0, now, finish, count))
                next_batch += 1
                gpu_busy = True
                gpu_free = finish

        # next event
        t = -1
        if nxt < n:
            t = arrival_us[nxt]
        if gpu_busy and (t < 0 or gpu_free < t):
            t = gpu_free
        for ln in range(lanes):
            if lane_busy[ln] and (t < 0 or lane_free[ln] < t):
                t = lane_free[ln]
        if not gpu_busy and gpu_q:
            while not waiting[oldest]:
                oldest += 1
            f = flush_us[oldest]
            if f > now and (t < 0 or f < t):
                t = f
        if t < 0 or t > horizon_us:
            break
        now = t

    return start, end, executor, lane_of, batch_of, batches
