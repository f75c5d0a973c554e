"""Glue between traces, the estimator and the simulator."""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .estimator import EstimatorProfile, UncertaintyScore, profile_offline
from .profiles import ModelProfile
from .sched import Task, assign_deadline
from .sim.engine import SimTask
from .textfeat import Lexicon, default_lexicon, rule_gen, word_count
from .workload import ArrivalPlan, TraceRecord, gen_arrivals, inject_malicious, make_variance_subsets


# (lexicon version, text) -> rule features + word count; texts repeat across sweeps
_FEATURES: dict = {}


def text_features(text: str, lexicon: Lexicon) -> tuple:
    key = (lexicon.version, text)
    hit = _FEATURES.get(key)
    if hit is None:
        hit = _FEATURES[key] = rule_gen(text, lexicon=lexicon).as_tuple() + (float(word_count(text, lexicon)),)
    return hit


def feature_matrix(records: Sequence[TraceRecord], lexicon: Lexicon | None = None,
                   use_length_feature: bool = False) -> np.ndarray:
    lexicon = lexicon or default_lexicon()
    width = 7 if use_length_feature else 6
    rows = [text_features(rec.text, lexicon)[:width] for rec in records]
    return np.array(rows, dtype=np.float64).reshape(len(rows), width)


def train_estimator(records: Sequence[TraceRecord], k: float = 0.9, seed: int = 0, epochs: int = 100,
                    lr: float = 1e-4, batch_size: int = 32, lexicon: Lexicon | None = None,
                    use_length_feature: bool = False) -> EstimatorProfile:
    lexicon = lexicon or default_lexicon()
    X = feature_matrix(records, lexicon, use_length_feature)
    y = np.array([r.true_output_len for r in records], dtype=np.float64)
    return profile_offline(X, y, k=k, lexicon_version=lexicon.version, epochs=epochs, lr=lr,
                           batch_size=batch_size, seed=seed, use_length_feature=use_length_feature)


def calibrate(model: ModelProfile, estimator: EstimatorProfile) -> ModelProfile:
    """The model profile with threshold and ceiling taken from a trained estimator."""
    return replace(model, tau=estimator.tau, u_max=estimator.u_max)


def score_records(records: Sequence[TraceRecord], estimator: EstimatorProfile,
                  lexicon: Lexicon | None = None) -> np.ndarray:
    X = feature_matrix(records, lexicon, estimator.use_length_feature)
    return estimator.score_many(X)


def build_tasks(
    records: Sequence[TraceRecord],
    plan: ArrivalPlan,
    profile: ModelProfile,
    estimator: EstimatorProfile | None = None,
    tightness: float = 1.0,
    lexicon: Lexicon | None = None,
) -> list[SimTask]:
    """One simulated task per arrival, ordered by arrival time.

    Without an estimator the single-rule heuristic (sum of rule intensities,
    or the input length when no rule fires) stands in for the score.
    """
    lexicon = lexicon or default_lexicon()
    by_id = {r.id: r for r in records}
    placed = [by_id[rid] for rid in plan.record_ids]
    if estimator is not None:
        values = score_records(placed, estimator, lexicon)
    else:
        values = [float(sum(text_features(r.text, lexicon)[:6])) or text_features(r.text, lexicon)[6] for r in placed]
    tasks = []
    for rec, arrival, value in zip(placed, plan.arrivals, values):
        n_in = max(1, int(text_features(rec.text, lexicon)[6]))
        # a trace deadline is a budget relative to the arrival
        user = None if rec.user_deadline is None else float(arrival) + rec.user_deadline
        deadline = assign_deadline(float(arrival), n_in, profile, tightness, user)
        task = Task(
            id=rec.id,
            text=rec.text,
            arrival=float(arrival),
            deadline=deadline,
            input_len=n_in,
            u=UncertaintyScore.from_value(float(value), profile.u_max),
        )
        tasks.append(SimTask(task, rec.true_output_len, rec.malicious))
    return tasks


def select_records(records: Sequence[TraceRecord], estimator: EstimatorProfile | None, seed: int,
                   variance: str | None = None, subset_size: int | None = None,
                   limit: int | None = None) -> list[TraceRecord]:
    """Optional variance subset (a third of the trace unless sized), then a prefix limit."""
    records = list(records)
    if variance is not None:
        scorer = None if estimator is None else (lambda recs: score_records(recs, estimator))
        records = make_variance_subsets(records, scorer, seed, subset_size)[variance]
    if limit is not None:
        records = records[:limit]
    return records


def make_workload(records: Sequence[TraceRecord], profile: ModelProfile, estimator: EstimatorProfile | None,
                  seed: int, beta_schedule=(60.0,), xi: float = 2.0, malicious_ratio: float = 0.0,
                  malicious_inflation: float = 3.0, tightness: float = 1.0) -> tuple[list[SimTask], ArrivalPlan]:
    """Malicious injection, arrivals and task construction for one seed.

    The arrival plan depends only on the seed and the record count, so
    every policy and malicious ratio run under the same seed sees the
    same arrival times.
    """
    if malicious_ratio > 0:
        records = inject_malicious(records, malicious_ratio, seed, malicious_inflation)
    plan = gen_arrivals(len(records), beta_schedule, seed, xi, [r.id for r in records])
    return build_tasks(records, plan, profile, estimator, tightness), plan
