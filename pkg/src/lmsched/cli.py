"""Command-line entry point: ``lmsched {profile,run,compare,report}``.

Exit codes: 0 on success (possibly with warnings), 2 for configuration or
input errors, 3 for failures during training or simulation.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import (
    FLAG_PATHS,
    ConfigError,
    get_path,
    load_config,
    parse_scalar,
    resolve_resource,
    scheduler_config,
    set_path,
    sim_config,
    validate,
    workload_params,
)
from .metrics import COMPARE_METRICS, build_report, compare_values, read_log_csv, write_log_csv
from .pipeline import calibrate, make_workload, select_records, train_estimator
from .profiles import ProfileHashMismatch, read_profile, reference_profile, write_profile
from .sched import Policy
from .sim.engine import HorizonExceeded, run_sim
from .textfeat import default_lexicon
from .workload import EstimatorMissing, InvalidRecord, ParseError, load_trace, parse_beta_schedule

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SWEEP_ALIASES = {"alpha": "scheduler.alpha", "lambda": "scheduler.lam", "lam": "scheduler.lam",
                 "b": "scheduler.b", "k": "scheduler.k", "xi": "workload.xi",
                 "malicious_ratio": "workload.malicious_ratio", "tightness": "workload.tightness"}


def _dump_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


# ------------------------------------------------------------------ loading


def load_profile_ref(ref: str):
    """``reference:NAME`` for a shipped calibration without estimator, else an artifact file."""
    if ref.startswith("reference:"):
        try:
            return reference_profile(ref.split(":", 1)[1]), None
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    path = resolve_resource(ref)
    try:
        return read_profile(path)
    except (ProfileHashMismatch, ValueError, KeyError) as exc:
        raise ConfigError(f"{ref}: {exc}") from None


def load_trace_ref(ref: str):
    path = resolve_resource(ref)
    try:
        return load_trace(path)
    except (ParseError, InvalidRecord) as exc:
        raise ConfigError(f"{ref}: {exc}") from None


def simulate_config(cfg: dict, records=None, loaded=None):
    """One simulation for a resolved config; returns the engine result."""
    model, estimator = loaded or load_profile_ref(cfg["profile"])
    if records is None:
        records = load_trace_ref(cfg["trace"])
    w = workload_params(cfg)
    seed = int(cfg["seed"])
    chosen = select_records(records, estimator, seed, w.variance, w.subset_size, w.limit)
    if not chosen:
        raise ConfigError("workload is empty")
    tasks, _plan = make_workload(chosen, model, estimator, seed, w.beta_schedule, w.xi, w.malicious_ratio,
                                 w.malicious_inflation, w.tightness)
    return run_sim(tasks, scheduler_config(cfg), model, sim_config(cfg), seed)


def _summary_of(cfg: dict) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HorizonExceeded)
        result = simulate_config(cfg)
    return result.report.summary()


# ---------------------------------------------------------------- commands


def cmd_profile(args) -> int:
    records = load_trace_ref(args.trace)
    try:
        base = reference_profile(args.model)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    estimator = train_estimator(records, k=args.k, seed=args.seed, epochs=args.epochs, lr=args.lr,
                                batch_size=args.batch_size)
    model = calibrate(base, estimator)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = write_profile(out, model, estimator)
    print(f"tau={estimator.tau:.6f} u_max={estimator.u_max:.6f} final_loss={estimator.losses[-1]:.6f}")
    print(f"wrote {out} (sha256 {digest})")
    return EXIT_OK


def cmd_run(cfg: dict) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HorizonExceeded)
        result = simulate_config(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    report = result.report
    lexicon = default_lexicon().version
    header = [f"lmsched {__version__}", f"seed {cfg['seed']}", f"lexicon {lexicon}",
              f"workload {report.workload_fingerprint}", f"config {_dump_config(cfg)}"]
    write_log_csv(result.log, out / "tasks.csv", header)
    summary = report.summary()
    summary["run_config"] = cfg
    summary["lexicon_version"] = lexicon
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"mean_response={report.mean_response:.6f} p95={report.p95_response:.6f} "
          f"miss_ratio={report.miss_ratio:.6f} unfinished={report.n_unfinished}")
    print(f"wrote {out / 'tasks.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def _frange(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise ConfigError("sweep step must be > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def parse_sweep(text: str) -> tuple[str, list[float]]:
    try:
        name, lo, hi, step = text.split(":")
        values = _frange(float(lo), float(hi), float(step))
    except ValueError:
        raise ConfigError(f"--sweep expects param:lo:hi:step, got {text!r}") from None
    return SWEEP_ALIASES.get(name, name), values


def _run_many(configs: list[dict], jobs: int) -> list[dict]:
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_summary_of, configs))
    return [_summary_of(c) for c in configs]


def _aggregate(summaries: list[dict]) -> dict:
    out = {}
    for metric in ("mean_response", "p95_response", "max_response", "miss_ratio", "throughput_per_min"):
        values = np.array([s[metric] for s in summaries], dtype=np.float64)
        out[metric] = float(values.mean())
        out[metric + "_std"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    out["throughput"] = out["throughput_per_min"]
    out["unfinished"] = int(sum(s["n_unfinished"] for s in summaries))
    return out


def cmd_compare(cfg: dict, policies: list[str], seeds: list[int], sweep: str | None, jobs: int) -> int:
    path, values = parse_sweep(sweep) if sweep else (None, [None])
    if path is not None:
        try:
            get_path(cfg, path)
        except (KeyError, TypeError):
            raise ConfigError(f"unknown sweep parameter {sweep.split(':')[0]!r}") from None
    runs, keys = [], []
    for value in values:
        for policy in policies:
            for seed in seeds:
                c = copy.deepcopy(cfg)
                c["scheduler"]["policy"] = policy
                c["seed"] = seed
                if path is not None:
                    set_path(c, path, value)
                validate(c)
                runs.append(c)
                keys.append((value, policy))
    summaries = _run_many(runs, jobs)
    groups: dict = {}
    for key, s in zip(keys, summaries):
        groups.setdefault(key, []).append(s)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# lmsched {__version__}", f"# seeds {','.join(map(str, seeds))}", f"# config {_dump_config(cfg)}"]
    if path is None:
        agg = {policy: _aggregate(groups[(None, policy)]) for policy in policies}
        table = compare_values(agg, "FIFO")
        lines.append("policy,runs," + ",".join(f"{m},{m}_std" for m in COMPARE_METRICS)
                     + "," + ",".join(f"{m}_delta_pct" for m in COMPARE_METRICS))
        for policy in policies:
            a = agg[policy]
            cells = [policy, str(len(groups[(None, policy)]))]
            for m in COMPARE_METRICS:
                std_key = "throughput_per_min_std" if m == "throughput" else m + "_std"
                cells += [f"{a[m]:.6f}", f"{a[std_key]:.6f}"]
            cells += [f"{table.deltas[policy][m]:.2f}" for m in COMPARE_METRICS]
            lines.append(",".join(cells))
        name = "compare.csv"
    else:
        lines.append(f"{path},policy,runs,mean_response,mean_response_std,p95_response,miss_ratio,throughput")
        for (value, policy), group in groups.items():
            a = _aggregate(group)
            lines.append(f"{value},{policy},{len(group)},{a['mean_response']:.6f},{a['mean_response_std']:.6f},"
                         f"{a['p95_response']:.6f},{a['miss_ratio']:.6f},{a['throughput']:.6f}")
        name = "sweep.csv"
    (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(ln for ln in lines if not ln.startswith("#")))
    print(f"wrote {out / name} ({len(runs)} runs)")
    return EXIT_OK


def cmd_report(paths: list[str], out: str | None) -> int:
    reports = {}
    for p in paths:
        path = Path(p)
        if path.is_dir():
            path = path / "tasks.csv"
        if not path.is_file():
            raise ConfigError(f"file not found: {p}")
        try:
            rows = read_log_csv(path)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{p}: not a per-task log ({exc})") from None
        reports[str(p)] = build_report(rows)
    for name, report in reports.items():
        s = report.summary()
        print(f"{name}: tasks={s['n_tasks']} mean={s['mean_response']:.6f} p95={s['p95_response']:.6f} "
              f"max={s['max_response']:.6f} miss_ratio={s['miss_ratio']:.6f} "
              f"throughput={s['throughput_per_min']:.3f}/min gpu={s['gpu_utilization']:.3f} "
              f"cpu={s['cpu_utilization']:.3f} unfinished={s['n_unfinished']}")
    if out:
        Path(out).write_text(json.dumps({k: r.summary() for k, r in reports.items()}, indent=2, sort_keys=True)
                             + "\n", encoding="utf-8")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--trace", help="trace JSONL (packaged:NAME for shipped data)")
    p.add_argument("--profile", help="profile artifact, or reference:MODEL")
    p.add_argument("--policy", help="FIFO, EDF (alias HPF), LUF, MUF, SLACK or UP")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--beta-schedule", dest="beta_schedule", help="per-minute rates: lo:hi:step or a,b,c")
    p.add_argument("--xi", type=float, help="wait interval in seconds")
    p.add_argument("--malicious-ratio", dest="malicious_ratio", type=float)
    p.add_argument("--variance", choices=("small", "normal", "large"))
    p.add_argument("--horizon", type=float, help="stop simulating at this time (seconds)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key by dotted path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmsched", description="Uncertainty-aware LM request scheduling simulator")
    parser.add_argument("--version", action="version", version=f"lmsched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="train the length estimator and write a profile artifact")
    p.add_argument("--trace", default="packaged:synthetic_train.jsonl")
    p.add_argument("--model", default="DialoGPT", help="reference latency calibration to start from")
    p.add_argument("--k", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--out", default="profile.json")

    p = sub.add_parser("run", help="simulate one configuration")
    _add_run_flags(p)

    p = sub.add_parser("compare", help="run several policies and seeds on identical arrivals")
    _add_run_flags(p)
    p.add_argument("--policies", default="FIFO,EDF,LUF,MUF,UP")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--sweep", help="param:lo:hi:step, e.g. alpha:0:2:0.1")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="recompute metrics from per-task CSV logs")
    p.add_argument("inputs", nargs="+", help="tasks.csv files or run directories")
    p.add_argument("--out", help="write a JSON summary here")
    return parser


def resolve_config(args) -> dict:
    overrides = {}
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[path] = value
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = parse_scalar(value)
    if "workload.beta_schedule" in overrides:
        try:
            parse_beta_schedule(overrides["workload.beta_schedule"])
        except ValueError:
            raise ConfigError(f"bad --beta-schedule {overrides['workload.beta_schedule']!r}") from None
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "profile":
            return cmd_profile(args)
        if args.command == "report":
            return cmd_report(args.inputs, args.out)
        cfg = resolve_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        try:
            policies = [Policy.parse(p).value for p in args.policies.split(",") if p.strip()]
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cmd_compare(cfg, policies, seeds, args.sweep, max(1, args.jobs))
    except (ConfigError, EstimatorMissing, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside training or simulation
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
