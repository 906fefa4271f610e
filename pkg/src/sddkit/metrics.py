"""Detection metrics, tag-set Jaccard, judge-score aggregation, histograms.

Bona fide is the positive class throughout. Components whose denominator
is zero (e.g. F1 on a corpus with no positives) are reported as None and
listed in ``DetectionReport.undefined`` instead of being silently zeroed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Label, VALID_TAG_IDS

TagSet = frozenset[int]


class MetricsError(ValueError):
    pass


class EmptyInput(MetricsError):
    def __init__(self) -> None:
        super().__init__("no scored pairs")


class RaggedRuns(MetricsError):
    def __init__(self) -> None:
        super().__init__("runs have differing sample counts")


class UndefinedMetric(MetricsError):
    def __init__(self, name: str):
        super().__init__(f"metric {name!r} undefined (zero denominator)")
        self.name = name


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Label, Label]]) -> "ConfusionCounts":
        tp = fp = tn = fn = 0
        for predicted, truth in pairs:
            if truth is Label.BONA_FIDE:
                if predicted is Label.BONA_FIDE:
                    tp += 1
                else:
                    fn += 1
            else:
                if predicted is Label.BONA_FIDE:
                    fp += 1
                else:
                    tn += 1
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class DetectionReport:
    counts: ConfusionCounts
    accuracy: float
    balanced_accuracy: float | None
    f1: float | None
    recall_bonafide: float | None
    recall_spoof: float | None
    undefined: tuple[str, ...]


def detection_metrics(pairs: Sequence[tuple[Label, Label]]) -> DetectionReport:
    """Accuracy, balanced accuracy, and F1 over (predicted, truth) pairs."""
    if not pairs:
        raise EmptyInput()
    c = ConfusionCounts.from_pairs(pairs)
    undefined: list[str] = []

    def ratio(num: int, den: int, name: str) -> float | None:
        if den == 0:
            undefined.append(name)
            return None
        return num / den

    recall_b = ratio(c.tp, c.tp + c.fn, "recall_bonafide")
    recall_s = ratio(c.tn, c.tn + c.fp, "recall_spoof")
    balanced = (recall_b + recall_s) / 2 if recall_b is not None and recall_s is not None else None
    if balanced is None:
        undefined.append("balanced_accuracy")
    f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1")
    return DetectionReport(
        counts=c,
        accuracy=(c.tp + c.tn) / c.total,
        balanced_accuracy=balanced,
        f1=f1,
        recall_bonafide=recall_b,
        recall_spoof=recall_s,
        undefined=tuple(undefined),
    )


def _check_tags(tags: Iterable[int]) -> TagSet:
    tag_set = frozenset(tags)
    bad = tag_set - VALID_TAG_IDS
    if bad:
        raise MetricsError(f"tag ids outside 1..14: {sorted(bad)}")
    return tag_set


def jaccard(y: Iterable[int], yhat: Iterable[int]) -> float:
    """|Y intersect Yhat| / |Y union Yhat|; two empty sets score 1.0.

    The empty-vs-empty convention rewards a correctly empty prediction for
    bona fide samples, which carry no cue tags.
    """
    a, b = _check_tags(y), _check_tags(yhat)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def mean_jaccard(pairs: Iterable[tuple[Iterable[int], Iterable[int]]]) -> float:
    """Unweighted per-sample average of jaccard over (reference, predicted)."""
    scores = [jaccard(y, yhat) for y, yhat in pairs]
    if not scores:
        raise EmptyInput()
    return sum(scores) / len(scores)


@dataclass(frozen=True)
class JudgeAggregate:
    mean: float
    std: float
    n_runs: int

    def __str__(self) -> str:
        return f"{self.mean:.2f} +/- {self.std:.2f} over {self.n_runs} run(s)"


def aggregate_judge_scores(runs: Sequence[Sequence[float]]) -> JudgeAggregate:
    """Mean and population std over all per-sample scores of all runs."""
    if not runs or not runs[0]:
        raise EmptyInput()
    if any(len(run) != len(runs[0]) for run in runs):
        raise RaggedRuns()
    scores = [s for run in runs for s in run]
    mean = sum(scores) / len(scores)
    var = sum((s - mean) ** 2 for s in scores) / len(scores)
    return JudgeAggregate(mean=mean, std=math.sqrt(var), n_runs=len(runs))


def tag_histogram(items: Iterable[Iterable[int]]) -> dict[int, int]:
    """Occurrences of each taxonomy tag across tag sets; absent tags are 0."""
    counts = {tag_id: 0 for tag_id in sorted(VALID_TAG_IDS)}
    for tags in items:
        for tag_id in _check_tags(tags):
            counts[tag_id] += 1
    return counts
