"""Annotation quality filtering: annotator accuracy, exclusion, and tiers.

The pipeline runs in the fixed order: per-annotator accuracy first, then
exclusion of annotators below the accuracy floor, then removal of
annotations whose decision contradicts the sample's ground truth. A seeded
review manifest picks a uniform subset of each retained annotator's output
for manual inspection; the pipeline itself never blocks on that review.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from ._rng import derive_seed
from .corpus import Annotation, Corpus, CorpusLike, as_corpus

REVIEW_SALT = "review-manifest"


class Tier(Enum):
    HIGH = "high"
    MEDIUM = "medium"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class FilterConfig:
    min_accuracy: float = 0.75
    high_tier_accuracy: float = 0.85
    review_sample_min: int = 30
    review_sample_max: int = 50

    def __post_init__(self) -> None:
        if not 0 <= self.min_accuracy <= self.high_tier_accuracy <= 1:
            raise ValueError("need 0 <= min_accuracy <= high_tier_accuracy <= 1")
        if not 0 < self.review_sample_min <= self.review_sample_max:
            raise ValueError("need 0 < review_sample_min <= review_sample_max")

    def tier_for(self, accuracy: float) -> Tier:
        if accuracy >= self.high_tier_accuracy:
            return Tier.HIGH
        if accuracy >= self.min_accuracy:
            return Tier.MEDIUM
        return Tier.EXCLUDED


@dataclass(frozen=True)
class AnnotatorRecord:
    annotator_id: str
    n_annotations: int
    n_correct: int
    accuracy: float
    tier: Tier

    def to_record(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "n_annotations": self.n_annotations,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "tier": self.tier.value,
        }


@dataclass(frozen=True)
class FilterResult:
    retained: tuple[Annotation, ...]
    report: dict[str, AnnotatorRecord]
    review_manifest: dict[str, tuple[Annotation, ...]]


def annotator_accuracy(
    annotations: Iterable[Annotation],
    samples: CorpusLike,
    cfg: FilterConfig = FilterConfig(),
) -> dict[str, AnnotatorRecord]:
    """Per-annotator accuracy against ground truth, with tier assignment.

    Annotators with zero annotations simply never appear in the map.
    """
    corpus = as_corpus(samples)
    counts: dict[str, list[int]] = {}
    for annotation in annotations:
        label = corpus.label_of(annotation.sample_id)
        total_correct = counts.setdefault(annotation.annotator_id, [0, 0])
        total_correct[0] += 1
        if annotation.agrees_with(label):
            total_correct[1] += 1
    report = {}
    for annotator_id, (total, correct) in sorted(counts.items()):
        accuracy = correct / total
        report[annotator_id] = AnnotatorRecord(
            annotator_id=annotator_id,
            n_annotations=total,
            n_correct=correct,
            accuracy=accuracy,
            tier=cfg.tier_for(accuracy),
        )
    return report


def _review_sample(
    annotations: Sequence[Annotation], annotator_id: str, cfg: FilterConfig
) -> tuple[Annotation, ...]:
    k = min(len(annotations), cfg.review_sample_max)
    rng = random.Random(derive_seed(annotator_id, REVIEW_SALT))
    return tuple(rng.sample(list(annotations), k))


def filter_corpus(
    annotations: Iterable[Annotation],
    samples: CorpusLike,
    cfg: FilterConfig = FilterConfig(),
) -> FilterResult:
    """Drop excluded annotators, then wrong-label annotations.

    Returns the retained annotations, the full annotator report (excluded
    annotators included, for audit), and the per-annotator review manifest
    drawn from the retained set.
    """
    corpus = as_corpus(samples)
    annotations = list(annotations)
    report = annotator_accuracy(annotations, corpus, cfg)

    retained: list[Annotation] = []
    by_annotator: dict[str, list[Annotation]] = {}
    for annotation in annotations:
        record = report[annotation.annotator_id]
        if record.tier is Tier.EXCLUDED:
            continue
        if not annotation.agrees_with(corpus.label_of(annotation.sample_id)):
            continue
        retained.append(annotation)
        by_annotator.setdefault(annotation.annotator_id, []).append(annotation)

    review = {
        annotator_id: _review_sample(kept, annotator_id, cfg)
        for annotator_id, kept in sorted(by_annotator.items())
    }
    return FilterResult(retained=tuple(retained), report=report, review_manifest=review)
