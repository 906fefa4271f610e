"""Speech deepfake detection tooling: corpora, traces, rewards, campaigns.

The package covers the non-neural machinery around a reasoning SDD
pipeline: annotation campaign service with quality control, corpus
filtering and splits, structured trace parsing, detection and reasoning
metrics, GRPO-style reward shaping, deterministic audio perturbation for
grounding, and an LLM-judge client with an offline mock.
"""
from .corpus import (
    Annotation,
    AudioSample,
    Corpus,
    Decision,
    Label,
    OTHER_TAG_ID,
    REASON_TAXONOMY,
    ReasonTag,
    Split,
    SplitSpec,
    ingest_annotations,
    ingest_samples,
    make_splits,
)
from .filtering import FilterConfig, FilterResult, Tier, annotator_accuracy, filter_corpus
from .metrics import (
    DetectionReport,
    JudgeAggregate,
    aggregate_judge_scores,
    detection_metrics,
    jaccard,
    mean_jaccard,
    tag_histogram,
)
from .rewards import GenerationGroup, JudgeScore, RewardConfig, build_groups, group_advantages
from .traceparse import ParseMode, ReasoningTrace, parse_hard_label, parse_trace, serialize_trace

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AudioSample",
    "Corpus",
    "Decision",
    "DetectionReport",
    "FilterConfig",
    "FilterResult",
    "GenerationGroup",
    "JudgeAggregate",
    "JudgeScore",
    "Label",
    "OTHER_TAG_ID",
    "ParseMode",
    "REASON_TAXONOMY",
    "ReasonTag",
    "ReasoningTrace",
    "RewardConfig",
    "Split",
    "SplitSpec",
    "Tier",
    "aggregate_judge_scores",
    "annotator_accuracy",
    "build_groups",
    "detection_metrics",
    "filter_corpus",
    "group_advantages",
    "ingest_annotations",
    "ingest_samples",
    "jaccard",
    "make_splits",
    "mean_jaccard",
    "parse_hard_label",
    "parse_trace",
    "serialize_trace",
    "tag_histogram",
    "__version__",
]
