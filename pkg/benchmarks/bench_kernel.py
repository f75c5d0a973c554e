"""Time the compiled and pure-Python event loops on the same workload.

    python benchmarks/bench_kernel.py [--tasks 6000] [--repeat 3] [--policy UP]

Both kernels get identical inputs; the script also checks that their
logs agree. Task preparation (priorities, epochs, latencies) is shared
and timed separately.
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace

from lmsched.config import resolve_resource
from lmsched.pipeline import make_workload
from lmsched.profiles import read_profile
from lmsched.sched import Policy, SchedulerConfig
from lmsched.sim import kernel
from lmsched.sim.engine import SimConfig, run_sim
from lmsched.workload import load_trace, parse_beta_schedule


def timed(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tasks", type=int, default=6000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--policy", default="UP")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model, est = read_profile(resolve_resource("packaged:dialogpt_synthetic.profile.json"))
    records = load_trace(resolve_resource("packaged:synthetic_test.jsonl"))[: args.tasks]
    tasks, _ = make_workload(records, model, est, args.seed, parse_beta_schedule("10:150:10"))
    cfg = SchedulerConfig(policy=Policy.parse(args.policy))

    # capture the kernel arguments once so the loops can be timed alone
    captured = {}
    original = kernel.python_simulate

    def spy(*a):
        captured["args"] = a
        return original(*a)

    kernel.python_simulate = spy
    try:
        t_full_py, res_py = timed(lambda: run_sim([replace(t) for t in tasks], cfg, model, SimConfig(kernel="python")),
                                  1)
    finally:
        kernel.python_simulate = original
    t_py, _ = timed(lambda: original(*captured["args"]), args.repeat)

    print(f"{len(tasks)} tasks, policy {args.policy}, best of {args.repeat}")
    print(f"  python kernel    {t_py * 1e3:9.1f} ms")
    print(f"  run_sim (python) {t_full_py * 1e3:9.1f} ms  including preparation")
    if kernel.compiled_simulate is None:
        print("  compiled kernel  not built")
        return
    t_c, _ = timed(lambda: kernel.compiled_simulate(*captured["args"]), args.repeat)
    res_c = run_sim([replace(t) for t in tasks], cfg, model, SimConfig(kernel="compiled"))
    print(f"  compiled kernel  {t_c * 1e3:9.1f} ms  ({t_py / t_c:.1f}x faster)")
    print(f"  logs identical: {res_py.log == res_c.log}")


if __name__ == "__main__":
    main()
