"""Traces, arrival processes and workload shaping.

Randomness is drawn from named sub-streams of one root seed (see
:func:`stream`) so that, for example, the arrival process can be held fixed
while the malicious subset changes.
"""
from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidRecord(ValueError):
    pass


class EstimatorMissing(RuntimeError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose under a root seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),)))


# ------------------------------------------------------------------ traces


@dataclass(frozen=True)
class TraceRecord:
    id: int
    text: str
    true_output_len: int
    user_deadline: float | None = None
    malicious: bool = False

    def validate(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise InvalidRecord(f"record id must be an integer, got {self.id!r}")
        if not isinstance(self.text, str):
            raise InvalidRecord(f"record {self.id}: text must be a string")
        if not isinstance(self.true_output_len, int) or self.true_output_len < 1:
            raise InvalidRecord(f"record {self.id}: out_len must be an integer >= 1, got {self.true_output_len!r}")
        if self.user_deadline is not None and not math.isfinite(self.user_deadline):
            raise InvalidRecord(f"record {self.id}: deadline must be finite")


def _record_from_obj(obj: dict, line: int) -> TraceRecord:
    if not isinstance(obj, dict):
        raise ParseError(line, "expected a JSON object")
    missing = {"id", "text", "out_len"} - set(obj)
    if missing:
        raise InvalidRecord(f"line {line}: missing fields {sorted(missing)}")
    deadline = obj.get("deadline")
    return TraceRecord(
        id=obj["id"],
        text=obj["text"],
        true_output_len=obj["out_len"],
        user_deadline=float(deadline) if deadline is not None else None,
        malicious=bool(obj.get("malicious", False)),
    )


def check_records(records: Sequence[TraceRecord]) -> None:
    seen = set()
    for rec in records:
        rec.validate()
        if rec.id in seen:
            raise InvalidRecord(f"duplicate record id {rec.id}")
        seen.add(rec.id)


def parse_trace(lines: Sequence[str]) -> list[TraceRecord]:
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, exc.msg) from None
        records.append(_record_from_obj(obj, lineno))
    check_records(records)
    return records


def load_trace(path: str | Path) -> list[TraceRecord]:
    # JSON strings may hold U+0085 or U+2028, which str.splitlines would cut at
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh.read().split("\n"))


def record_to_obj(rec: TraceRecord) -> dict:
    return {"id": rec.id, "text": rec.text, "out_len": rec.true_output_len, "deadline": rec.user_deadline,
            "malicious": rec.malicious}


def dumps_trace(records: Sequence[TraceRecord]) -> str:
    return "".join(json.dumps(record_to_obj(r), ensure_ascii=False) + "\n" for r in records)


def save_trace(path: str | Path, records: Sequence[TraceRecord]) -> None:
    check_records(records)
    Path(path).write_text(dumps_trace(records), encoding="utf-8")


# ---------------------------------------------------------------- arrivals


@dataclass
class ArrivalPlan:
    """Arrival times (seconds, non-decreasing) and the record placed at each."""

    arrivals: np.ndarray
    order: np.ndarray
    beta_schedule: tuple
    seed: int
    xi: float = 2.0
    record_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.arrivals)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task_id", "arrival_s"])
            for rid, t in zip(self.record_ids, self.arrivals):
                writer.writerow([rid, f"{t:.6f}"])

    def fingerprint(self) -> str:
        h = zlib.crc32(np.asarray(self.arrivals, dtype="<f8").tobytes())
        h = zlib.crc32(np.asarray(self.record_ids, dtype="<i8").tobytes(), h)
        return f"{h:08x}"


def parse_beta_schedule(spec: str | Sequence[float]) -> tuple:
    """``"10:150:10"`` (inclusive range) or ``"10,40,150"``."""
    if not isinstance(spec, str):
        return tuple(float(v) for v in spec)
    if ":" in spec:
        lo, hi, step = (float(v) for v in spec.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return tuple(round(lo + i * step, 10) for i in range(count))
    return tuple(float(v) for v in spec.split(","))


def arrival_times(n: int, beta_schedule: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant Poisson process, rate ``beta_schedule[m]`` per
    minute during minute ``m`` (the schedule repeats once exhausted).

    A gap that crosses a minute boundary is redrawn from the boundary at
    the new rate, which is exact by memorylessness.
    """
    if n < 1:
        raise ValueError("need at least one arrival")
    rates = np.asarray(beta_schedule, dtype=np.float64)
    if rates.size == 0 or np.any(rates <= 0):
        raise ValueError("arrival rates must be positive")
    out = np.empty(n)
    t, i = 0.0, 0
    while i < n:
        minute = int(t // 60.0)
        rate = rates[minute % rates.size] / 60.0
        boundary = (minute + 1) * 60.0
        gap = rng.exponential(1.0 / rate)
        if t + gap >= boundary:
            t = boundary
            continue
        t += gap
        out[i] = t
        i += 1
    return out


def gen_arrivals(n: int, beta_schedule: Sequence[float], seed: int, xi: float = 2.0, record_ids=None) -> ArrivalPlan:
    arrivals = arrival_times(n, beta_schedule, stream(seed, "arrivals"))
    order = stream(seed, "shuffle").permutation(n)
    ids = [record_ids[i] for i in order] if record_ids is not None else [int(i) for i in order]
    return ArrivalPlan(arrivals, order, tuple(beta_schedule), seed, xi, ids)


@dataclass(frozen=True)
class Epoch:
    start: float
    close: float
    first: int
    last: int  # inclusive


def apply_wait_interval(arrivals: Sequence[float], xi: float = 2.0) -> list[Epoch]:
    """Group arrivals into windows ``[start, start + xi)``.

    A window opens at the first arrival not covered by the previous one;
    arrivals at the same instant always share a window. ``close`` is when
    the window stops admitting arrivals and becomes the flush hint for the
    tasks in it.
    """
    epochs = []
    arrivals = list(arrivals)
    i = 0
    while i < len(arrivals):
        start = arrivals[i]
        close = start + xi
        j = i
        while j + 1 < len(arrivals) and (arrivals[j + 1] < close or arrivals[j + 1] == start):
            j += 1
        epochs.append(Epoch(start, close, i, j))
        i = j + 1
    return epochs


def flush_hints(arrivals: Sequence[float], xi: float = 2.0) -> np.ndarray:
    hints = np.empty(len(arrivals))
    for ep in apply_wait_interval(arrivals, xi):
        hints[ep.first : ep.last + 1] = ep.close
    return hints


# --------------------------------------------------------------- malicious

MALICIOUS_SUFFIX = " Explain everything about the history of stuff and things in general."


def inject_malicious(
    records: Sequence[TraceRecord],
    ratio: float,
    seed: int,
    inflation: float = 3.0,
    suffix: str = MALICIOUS_SUFFIX,
) -> list[TraceRecord]:
    """Flag ``ceil(ratio * n)`` records, inflate their output length and
    append vague and open-ended wording to their text."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    n = len(records)
    count = min(n, math.ceil(round(ratio * n, 9)))
    chosen = set(stream(seed, "malicious").choice(n, size=count, replace=False).tolist()) if count else set()
    out = []
    for i, rec in enumerate(records):
        if i in chosen:
            rec = replace(
                rec,
                text=rec.text + suffix,
                true_output_len=max(1, int(round(rec.true_output_len * inflation))),
                malicious=True,
            )
        out.append(rec)
    return out


# --------------------------------------------------------- variance subsets


def variance_subsets(scores: Sequence[float], size: int, seed: int) -> dict[str, np.ndarray]:
    """Index sets of equal size with ordered score variance.

    small: the contiguous window of sorted scores with least variance (the
    minimum-variance subset of that size is always such a window).
    large: ``j`` lowest plus ``size - j`` highest scores, best ``j`` (the
    maximum-variance subset always has that shape).
    normal: a uniform sample without replacement.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= size <= n:
        raise ValueError(f"subset size must be in [1, {n}]")
    order = np.argsort(scores, kind="stable")
    ranked = scores[order]
    window_var = [np.var(ranked[s : s + size]) for s in range(n - size + 1)]
    s_best = int(np.argmin(window_var))
    small = order[s_best : s_best + size]
    tail_var = [np.var(np.concatenate([ranked[:j], ranked[n - (size - j) :]])) for j in range(size + 1)]
    j_best = int(np.argmax(tail_var))
    large = np.concatenate([order[:j_best], order[n - (size - j_best) :]])
    normal = stream(seed, "variance").choice(n, size=size, replace=False)
    return {"small": np.sort(small), "normal": np.sort(normal), "large": np.sort(large)}


def make_variance_subsets(
    records: Sequence[TraceRecord],
    scorer: Callable[[Sequence[TraceRecord]], np.ndarray] | None,
    seed: int,
    size: int | None = None,
) -> dict[str, list[TraceRecord]]:
    if scorer is None:
        raise EstimatorMissing("variance subsets need a trained estimator to score records")
    scores = np.asarray(scorer(records), dtype=np.float64)
    picks = variance_subsets(scores, size or len(records) // 3, seed)
    return {name: [records[i] for i in idx] for name, idx in picks.items()}


# ----------------------------------------------------------- synthetic data

_NAMES = ("John", "Mary")
_PEOPLE = ("boy", "girl", "man", "woman", "friend", "teacher", "student")
_PLACES = (" in the park", " with a telescope", " near the river", " on the hill", " by the window", " in the garden")
_MULTI_TAG = ("watch", "record", "plant", "duck", "light", "book", "match", "train", "ring", "fish", "present", "object")
_NOUNS = ("car", "house", "door", "road", "bag", "coffee", "dinner", "movie", "garden", "office")
_POLY = ("bat", "trunk", "monitor", "bank", "bark", "crane", "date", "mouse", "pitch", "seal", "spring", "novel")
_VAGUE = ("something about", "the history of", "the general idea of", "various aspects of", "the overall concept of",
          "stuff related to", "everything about")
_TOPICS = ("art", "music", "science", "cooking", "travel", "sports", "movies", "gardening")
_OPEN = ("Why do people {v}?", "How does {x} change society?", "What are the effects of {x} on the world?",
         "What do you think about the future of {x}?", "What are the causes and consequences of {x} in developing countries?")
_OPEN_V = ("fall in love", "tell lies", "move to cities", "keep pets")
_OPEN_X = ("poverty", "technology", "education", "tourism", "advertising")
_MULTI_Q = ("What is {a}?", "How big is {b}?", "Where do {c} live?")
_ITEMS = ("behavior", "diet", "sleep", "habitat", "size", "color", "lifespan")
_NEUTRAL = ("I had coffee this morning.", "The cat sat on the mat.", "We walked home after dinner.",
            "My sister bought a new car.", "It rained all day.", "She is reading a book now.",
            "Thanks, that sounds good.", "I am going to bed.", "Nice to meet you.")

CATEGORIES = ("neutral", "structural", "syntactic", "semantic", "vague", "open_ended", "multi_part")

# tokens of expected output per unit of each feature, in feature order;
# lexical ambiguities < vague < open-ended / multi-part
# scaled so that the 0.9 quantile of trained scores lands near 35 tokens
LENGTH_WEIGHTS = (1.2, 1.2, 2.0, 4.0, 3.5, 3.0)
LENGTH_BASE = 2.5
LENGTH_PER_INPUT_TOKEN = 0.2
LENGTH_NOISE = 0.15


def sample_sentence(category: str, k: int, rng: np.random.Generator) -> str:
    pick = lambda seq: seq[rng.integers(len(seq))]  # noqa: E731
    if category == "structural":
        places = rng.choice(len(_PLACES), size=min(k + 1, len(_PLACES)), replace=False)
        return f"{pick(_NAMES)} saw a {pick(_PEOPLE)}" + "".join(_PLACES[i] for i in places) + "."
    if category == "syntactic":
        words = [pick(_MULTI_TAG) for _ in range(k + 1)]
        return "The " + " ".join(words) + " " + pick(_NOUNS) + "."
    if category == "semantic":
        return " ".join(f"I need a new {pick(_POLY)}." for _ in range(k))
    if category == "vague":
        return "Tell me " + " ".join(pick(_VAGUE) for _ in range(k)) + " " + pick(_TOPICS) + "."
    if category == "open_ended":
        return " ".join(pick(_OPEN).format(v=pick(_OPEN_V), x=pick(_OPEN_X)) for _ in range(k))
    if category == "multi_part":
        q = " ".join(pick(_MULTI_Q).format(a=pick(_NOUNS), b=pick(_NOUNS), c="cats") for _ in range(k))
        items = rng.choice(len(_ITEMS), size=k + 1, replace=False)
        listed = ", ".join(_ITEMS[i] for i in items[:-1]) + ", and " + _ITEMS[items[-1]]
        return q + f" How do cats and dogs differ in {listed}?"
    return pick(_NEUTRAL)


def synthetic_length(features: Sequence[float], input_len: int, rng: np.random.Generator) -> int:
    mean = LENGTH_BASE + LENGTH_PER_INPUT_TOKEN * input_len + float(np.dot(LENGTH_WEIGHTS, tuple(features)))
    return max(1, int(round(mean * rng.lognormal(0.0, LENGTH_NOISE))))


def synthetic_trace(n: int, seed: int, start_id: int = 0) -> list[TraceRecord]:
    """Templated utterances per uncertainty category plus neutral fillers.

    Output lengths grow with the rule intensities of the generated text and
    its input length, with multiplicative log-normal noise. About one in
    five utterances mixes two categories.
    """
    from .textfeat import rule_gen, word_count

    rng = stream(seed, "synthetic")
    records = []
    for i in range(n):
        category = CATEGORIES[rng.integers(len(CATEGORIES))]
        text = sample_sentence(category, int(rng.integers(1, 4)), rng)
        if rng.random() < 0.2:
            other = CATEGORIES[1 + rng.integers(len(CATEGORIES) - 1)]
            text = text + " " + sample_sentence(other, 1, rng)
        out_len = synthetic_length(rule_gen(text), word_count(text), rng)
        records.append(TraceRecord(start_id + i, text, out_len))
    return records
