"""Reward computation and group-relative advantage normalization.

Each training sample gets a group of G generations (default 6). Every
generation earns a binary correctness reward, a binary format reward
(strict-grammar parse), and a judge-preference reward in [0, 1]; the
weighted composite is normalized within the group to a zero-mean
advantage, as in group-relative policy optimization.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import CorpusLike, Label, as_corpus
from .traceparse import ParseMode, TraceParseError, parse_trace


class RewardError(ValueError):
    pass


class WrongGroupSize(RewardError):
    def __init__(self, expected: int, got: int, sample_id: str | None = None):
        where = f" for sample {sample_id!r}" if sample_id else ""
        super().__init__(f"expected {expected} generations{where}, got {got}")
        self.expected = expected
        self.got = got
        self.sample_id = sample_id


@dataclass(frozen=True)
class RewardConfig:
    w_correct: float = 1.0
    w_format: float = 0.2
    w_pref: float = 0.5
    group_size: int = 6
    epsilon: float = 1e-8
    # Credit granted when only a lenient parse succeeds; 0 keeps the
    # format reward strictly binary.
    lenient_format_credit: float = 0.0

    def __post_init__(self) -> None:
        if min(self.w_correct, self.w_format, self.w_pref) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class JudgeScore:
    """Integer rubric scores on the judge's 0..10 scale."""

    coverage: int
    relevance: int
    logic: int
    helpfulness: int

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not 0 <= value <= 10:
                raise ValueError(f"{name} score {value} outside 0..10")

    def as_dict(self) -> dict[str, int]:
        return {
            "coverage": self.coverage,
            "relevance": self.relevance,
            "logic": self.logic,
            "helpfulness": self.helpfulness,
        }

    @property
    def mean(self) -> float:
        return (self.coverage + self.relevance + self.logic + self.helpfulness) / 4


@dataclass(frozen=True)
class RewardBreakdown:
    correctness: float
    format: float
    preference: float
    composite: float


@dataclass(frozen=True)
class GenerationGroup:
    sample_id: str
    generations: tuple[tuple[str, RewardBreakdown], ...]
    advantages: tuple[float, ...]


def sample_rewards(
    raw: str,
    truth: Label,
    judge: JudgeScore | None = None,
    cfg: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    """Score one generation; total function, failures earn zero reward.

    Correctness uses lenient answer recovery even when the strict format
    check fails, so the two reward signals stay independent.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            parse_trace(raw, ParseMode.STRICT)
        fmt = 1.0
    except TraceParseError:
        fmt = 0.0

    correctness = 0.0
    try:
        trace = parse_trace(raw, ParseMode.LENIENT)
        if fmt == 0.0:
            fmt = cfg.lenient_format_credit
        if trace.answer is truth:
            correctness = 1.0
    except TraceParseError:
        pass

    preference = judge.mean / 10 if judge is not None else 0.0
    composite = cfg.w_correct * correctness + cfg.w_format * fmt + cfg.w_pref * preference
    return RewardBreakdown(
        correctness=correctness, format=fmt, preference=preference, composite=composite
    )


def group_advantages(
    composites: Sequence[float], cfg: RewardConfig = RewardConfig()
) -> list[float]:
    """Zero-mean, unit-scale advantages: (r - mean) / (popstd + epsilon)."""
    if len(composites) != cfg.group_size:
        raise WrongGroupSize(cfg.group_size, len(composites))
    mean = sum(composites) / len(composites)
    var = sum((r - mean) ** 2 for r in composites) / len(composites)
    denom = math.sqrt(var) + cfg.epsilon
    return [(r - mean) / denom for r in composites]


def build_groups(
    predictions: Iterable[tuple[str, str]],
    truths: CorpusLike,
    judge_scores: Mapping[tuple[str, int], JudgeScore] | None = None,
    cfg: RewardConfig = RewardConfig(),
) -> list[GenerationGroup]:
    """Group generations by sample id and attach rewards and advantages.

    ``predictions`` must hold exactly ``cfg.group_size`` entries per sample;
    ``judge_scores`` is keyed by (sample_id, generation_index).
    """
    corpus = as_corpus(truths)
    grouped: dict[str, list[str]] = {}
    for sample_id, raw in predictions:
        grouped.setdefault(sample_id, []).append(raw)

    groups = []
    for sample_id, raws in grouped.items():
        if len(raws) != cfg.group_size:
            raise WrongGroupSize(cfg.group_size, len(raws), sample_id)
        truth = corpus.label_of(sample_id)
        breakdowns = []
        for index, raw in enumerate(raws):
            judge = judge_scores.get((sample_id, index)) if judge_scores else None
            breakdowns.append(sample_rewards(raw, truth, judge, cfg))
        advantages = group_advantages([b.composite for b in breakdowns], cfg)
        groups.append(
            GenerationGroup(
                sample_id=sample_id,
                generations=tuple(zip(raws, breakdowns)),
                advantages=tuple(advantages),
            )
        )
    return groups


def groups_to_records(groups: Iterable[GenerationGroup]) -> Iterable[dict]:
    """Flatten groups into the reward output file schema."""
    for group in groups:
        for index, ((_, breakdown), advantage) in enumerate(
            zip(group.generations, group.advantages)
        ):
            yield {
                "sample_id": group.sample_id,
                "gen_index": index,
                "correctness": breakdown.correctness,
                "format": breakdown.format,
                "preference": breakdown.preference,
                "composite": breakdown.composite,
                "advantage": advantage,
            }
