# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event loop. Same contract as ``_kernel_py.simulate``."""
import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

KIND = "cython"


cdef inline void _push(int64_t[:] heap, Py_ssize_t *size, int64_t value) noexcept:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= value:
            break
        heap[i] = heap[parent]
        i = parent
    heap[i] = value


cdef inline int64_t _pop(int64_t[:] heap, Py_ssize_t *size) noexcept:
    cdef int64_t top = heap[0]
    cdef Py_ssize_t n = size[0] - 1
    cdef int64_t last = heap[n]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    size[0] = n
    if n == 0:
        return top
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and heap[child + 1] < heap[child]:
            child += 1
        if last <= heap[child]:
            break
        heap[i] = heap[child]
        i = child
    heap[i] = last
    return top


def simulate(
    arrival_us,
    flush_us,
    rank,
    u,
    gpu_us,
    cpu_us,
    to_cpu,
    Py_ssize_t stage_size,
    Py_ssize_t cap,
    double lam,
    bint consolidate,
    int64_t fixed_us,
    int64_t overhead_us,
    Py_ssize_t lanes,
    int64_t horizon_us,
):
    cdef Py_ssize_t n = len(arrival_us)
    cdef int64_t[:] arr = np.ascontiguousarray(arrival_us, dtype=np.int64)
    cdef int64_t[:] flush = np.ascontiguousarray(flush_us, dtype=np.int64)
    cdef int64_t[:] rk = np.ascontiguousarray(rank, dtype=np.int64)
    cdef double[:] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef int64_t[:] g = np.ascontiguousarray(gpu_us, dtype=np.int64)
    cdef int64_t[:] c = np.ascontiguousarray(cpu_us, dtype=np.int64)
    cdef cnp.uint8_t[:] tc = np.ascontiguousarray(to_cpu, dtype=np.uint8)

    start_a = np.full(n, -1, dtype=np.int64)
    end_a = np.full(n, -1, dtype=np.int64)
    exec_a = np.full(n, -1, dtype=np.int64)
    lane_a = np.full(n, -1, dtype=np.int64)
    batch_a = np.full(n, -1, dtype=np.int64)
    cdef int64_t[:] start = start_a
    cdef int64_t[:] end = end_a
    cdef int64_t[:] executor = exec_a
    cdef int64_t[:] lane_of = lane_a
    cdef int64_t[:] batch_of = batch_a
    batches = []
    if n == 0:
        return start_a.tolist(), end_a.tolist(), exec_a.tolist(), lane_a.tolist(), batch_a.tolist(), batches

    cdef int64_t[:] index_of = np.empty(n, dtype=np.int64)
    cdef int64_t[:] gpu_q = np.empty(n, dtype=np.int64)
    cdef int64_t[:] cpu_q = np.empty(n, dtype=np.int64)
    cdef int64_t[:] staged = np.empty(max(stage_size, 1), dtype=np.int64)
    cdef cnp.uint8_t[:] waiting = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[:] lane_busy = np.zeros(max(lanes, 1), dtype=np.uint8)
    cdef int64_t[:] lane_free = np.zeros(max(lanes, 1), dtype=np.int64)
    cdef Py_ssize_t gq = 0, cq = 0
    cdef Py_ssize_t i, j, ln, m, count, oldest = 0, nxt = 0
    cdef bint gpu_busy = False
    cdef int64_t gpu_free = 0, now, t, f, finish, longest, r, key_r
    cdef int64_t next_batch = 0
    cdef double key_u, prev

    for i in range(n):
        index_of[rk[i]] = i
    now = arr[0]

    while True:
        if gpu_busy and gpu_free == now:
            gpu_busy = False
        for ln in range(lanes):
            if lane_busy[ln] and lane_free[ln] == now:
                lane_busy[ln] = 0
        while nxt < n and arr[nxt] == now:
            if tc[nxt]:
                _push(cpu_q, &cq, rk[nxt])
            else:
                _push(gpu_q, &gq, rk[nxt])
                waiting[nxt] = 1
            nxt += 1

        for ln in range(lanes):
            if cq == 0:
                break
            if lane_busy[ln]:
                continue
            i = index_of[_pop(cpu_q, &cq)]
            finish = now + c[i] + overhead_us
            start[i] = now
            end[i] = finish
            executor[i] = 1
            lane_of[i] = ln
            batch_of[i] = next_batch
            batches.append((next_batch, 1, ln, now, finish, 1))
            next_batch += 1
            lane_busy[ln] = 1
            lane_free[ln] = finish

        if not gpu_busy and gq > 0:
            while not waiting[oldest]:
                oldest += 1
            if gq >= stage_size or now >= flush[oldest]:
                m = stage_size if gq > stage_size else gq
                for j in range(m):
                    staged[j] = _pop(gpu_q, &gq)
                if consolidate:
                    # insertion sort on (u, rank)
                    for j in range(1, m):
                        key_r = staged[j]
                        key_u = uu[index_of[key_r]]
                        i = j - 1
                        while i >= 0 and (uu[index_of[staged[i]]] > key_u or
                                          (uu[index_of[staged[i]]] == key_u and staged[i] > key_r)):
                            staged[i + 1] = staged[i]
                            i -= 1
                        staged[i + 1] = key_r
                    count = 1
                    prev = uu[index_of[staged[0]]]
                    for j in range(1, m):
                        key_u = uu[index_of[staged[j]]]
                        if count >= cap or key_u > lam * prev:
                            break
                        count += 1
                        prev = key_u
                else:
                    count = cap if m > cap else m
                for j in range(count, m):
                    _push(gpu_q, &gq, staged[j])
                longest = 0
                for j in range(count):
                    i = index_of[staged[j]]
                    if g[i] > longest:
                        longest = g[i]
                finish = now + fixed_us + longest + overhead_us * count
                for j in range(count):
                    i = index_of[staged[j]]
                    start[i] = now
                    end[i] = finish
                    executor[i] = 0
                    lane_of[i] = 0
                    batch_of[i] = next_batch
                    waiting[i] = 0
                batches.append((next_batch, 0, 0, now, finish, count))
                next_batch += 1
                gpu_busy = True
                gpu_free = finish

        t = -1
        if nxt < n:
            t = arr[nxt]
        if gpu_busy and (t < 0 or gpu_free < t):
            t = gpu_free
        for ln in range(lanes):
            if lane_busy[ln] and (t < 0 or lane_free[ln] < t):
                t = lane_free[ln]
        if not gpu_busy and gq > 0:
            while not waiting[oldest]:
                oldest += 1
            f = flush[oldest]
            if f > now and (t < 0 or f < t):
                t = f
        if t < 0 or t > horizon_us:
            break
        now = t

    return start_a.tolist(), end_a.tolist(), exec_a.tolist(), lane_a.tolist(), batch_a.tolist(), batches
