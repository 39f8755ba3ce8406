"""Synthetic multi-objective preference pairs with programmatic oracle scorers.

Each objective owns a disjoint class of token ids; a response scores the
fraction of its tokens that fall in that class. Responses draw their tokens
from a random mix over the classes, so gains on one objective cost the others.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

EOS = 0
TIE = None  # label_pair result for indifferent pairs
AGGREGATE_TIE_TOL = 1e-12


@dataclass(frozen=True)
class SynthTaskConfig:
    k: int = 2
    classes: tuple[tuple[int, ...], ...] = ()
    vocab_size: int = 64
    prompt_len: int = 8
    response_len: int = 12
    size: int = 2000
    # share of response tokens drawn from objective classes, uniform per response
    focus_min: float = 0.8
    focus_max: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(tuple(int(t) for t in c) for c in self.classes))
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(self.classes) != self.k:
            raise ValueError(f"expected {self.k} token classes, got {len(self.classes)}")
        seen: set[int] = set()
        for i, c in enumerate(self.classes):
            if not c:
                raise ValueError(f"token class {i} is empty")
            for t in c:
                if not 0 < t < self.vocab_size:
                    raise ValueError(f"token class {i} contains id {t} outside 1..{self.vocab_size - 1}")
                if t in seen:
                    raise ValueError(f"token class {i} overlaps another class at id {t}")
                seen.add(t)
        if not self.neutral_tokens:
            raise ValueError("vocabulary too small: no neutral tokens left after the objective classes")
        for name in ("prompt_len", "response_len", "size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.focus_min <= self.focus_max <= 1.0:
            raise ValueError("need 0 < focus_min <= focus_max <= 1")

    @property
    def neutral_tokens(self) -> tuple[int, ...]:
        used = {t for c in self.classes for t in c}
        return tuple(t for t in range(1, self.vocab_size) if t not in used)

    @classmethod
    def contiguous(cls, k: int, class_size: int, vocab_size: int = 64, **kw) -> "SynthTaskConfig":
        if 1 + k * class_size >= vocab_size:
            raise ValueError(f"vocabulary of {vocab_size} is too small for {k} classes of {class_size}")
        classes = tuple(tuple(range(1 + i * class_size, 1 + (i + 1) * class_size)) for i in range(k))
        return cls(k=k, classes=classes, vocab_size=vocab_size, **kw)


@dataclass(frozen=True)
class PreferencePairRecord:
    prompt: tuple[int, ...]
    y1: tuple[int, ...]
    y2: tuple[int, ...]
    scores1: tuple[float, ...]
    scores2: tuple[float, ...]
    labels: tuple[int, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt": list(self.prompt),
                "y1": list(self.y1),
                "y2": list(self.y2),
                "scores1": list(self.scores1),
                "scores2": list(self.scores2),
                "labels": list(self.labels),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "PreferencePairRecord":
        d = json.loads(line)
        rec = cls(
            prompt=tuple(d["prompt"]),
            y1=tuple(d["y1"]),
            y2=tuple(d["y2"]),
            scores1=tuple(float(x) for x in d["scores1"]),
            scores2=tuple(float(x) for x in d["scores2"]),
            labels=tuple(int(x) for x in d["labels"]),
        )
        if not (len(rec.scores1) == len(rec.scores2) == len(rec.labels)):
            raise ValueError("record has inconsistent objective counts")
        return rec


def oracle_score(y: Sequence[int], objective_index: int, task: SynthTaskConfig) -> float:
    if not 0 <= objective_index < task.k:
        raise IndexError(f"objective index {objective_index} out of range for k={task.k}")
    if len(y) == 0:
        return 0.0
    cls = set(task.classes[objective_index])
    return sum(1 for t in y if t in cls) / len(y)


def oracle_scores(y: Sequence[int], task: SynthTaskConfig) -> tuple[float, ...]:
    return tuple(oracle_score(y, i, task) for i in range(task.k))


def label_pair(s1: float, s2: float) -> Optional[int]:
    """0 if the first response wins, 1 if the second does, ``TIE`` otherwise."""
    if s1 > s2:
        return 0
    if s1 < s2:
        return 1
    return TIE


def aggregate_label(record: PreferencePairRecord, alpha) -> Optional[int]:
    a = tuple(alpha)
    if len(a) != len(record.scores1):
        raise ValueError(f"alpha has {len(a)} entries, record has {len(record.scores1)} objectives")
    s1 = sum(w * s for w, s in zip(a, record.scores1))
    s2 = sum(w * s for w, s in zip(a, record.scores2))
    # weighted sums of equal scores can differ by rounding only
    if abs(s1 - s2) <= AGGREGATE_TIE_TOL:
        return TIE
    return label_pair(s1, s2)


def _response(rng: np.random.Generator, task: SynthTaskConfig, neutral: np.ndarray) -> tuple[int, ...]:
    weights = rng.dirichlet(np.ones(task.k))
    focus = rng.uniform(task.focus_min, task.focus_max)
    out = []
    for _ in range(task.response_len):
        if rng.random() < focus:
            c = task.classes[rng.choice(task.k, p=weights)]
            out.append(int(c[rng.integers(len(c))]))
        else:
            out.append(int(neutral[rng.integers(len(neutral))]))
    return tuple(out)


def generate_dataset(task: SynthTaskConfig, seed: Optional[int] = None, max_attempts: int = 100) -> list[PreferencePairRecord]:
    """``task.size`` pair records; pairs tying on any objective are redrawn."""
    rng = np.random.default_rng(task.seed if seed is None else seed)
    neutral = np.asarray(task.neutral_tokens)
    records: list[PreferencePairRecord] = []
    attempts = 0
    while len(records) < task.size:
        attempts += 1
        if attempts > max_attempts * task.size:
            raise RuntimeError("could not draw enough non-tied pairs; widen the token classes or responses")
        prompt = tuple(int(t) for t in rng.integers(1, task.vocab_size, size=task.prompt_len))
        y1, y2 = _response(rng, task, neutral), _response(rng, task, neutral)
        s1, s2 = oracle_scores(y1, task), oracle_scores(y2, task)
        labels = tuple(label_pair(a, b) for a, b in zip(s1, s2))
        if any(z is TIE for z in labels):
            continue
        records.append(PreferencePairRecord(prompt, y1, y2, s1, s2, labels))
    return records


def split_indices(n: int, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> list[np.ndarray]:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError("split ratios must be three nonnegative numbers summing to 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return [np.sort(perm[:n_train]), np.sort(perm[n_train : n_train + n_val]), np.sort(perm[n_train + n_val :])]


def split_dataset(records: Sequence[PreferencePairRecord], ratios=(0.8, 0.1, 0.1), seed: int = 0):
    return [[records[i] for i in idx] for idx in split_indices(len(records), ratios, seed)]


def write_records(path: str | Path, records: Iterable[PreferencePairRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: str | Path) -> list[PreferencePairRecord]:
    with open(path, encoding="utf-8") as fh:
        return [PreferencePairRecord.from_json(line) for line in fh if line.strip()]


def score_gap_correlation(records: Sequence[PreferencePairRecord], i: int = 0, j: int = 1) -> float:
    gi = np.array([r.scores1[i] - r.scores2[i] for r in records])
    gj = np.array([r.scores1[j] - r.scores2[j] for r in records])
    return float(np.corrcoef(gi, gj)[0, 1])
