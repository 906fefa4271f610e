"""Canonical data model, JSONL ingestion, and stratified split generation.

File schemas (one JSON object per line, UTF-8):

samples:      id, audio_path, label ("bonafide"|"spoof"), source, language,
              duration_s. Unknown extra fields are preserved on the sample.
annotations:  annotator_id, sample_id, decision ("genuine"|"artificial"),
              reasons (array of ints 1..14), other_text (string or null),
              comment, ts (ISO-8601).
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

from ._rng import fnv1a_64

# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class CorpusError(ValueError):
    """Base class for ingestion and validation failures."""


class MalformedRecord(CorpusError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no
        self.detail = detail


class MissingField(CorpusError):
    def __init__(self, name: str, line_no: int | None = None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"missing field {name!r}{where}")
        self.name = name
        self.line_no = line_no


class DuplicateId(CorpusError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class UnknownSample(CorpusError):
    def __init__(self, sample_id: str):
        super().__init__(f"unknown sample id {sample_id!r}")
        self.sample_id = sample_id


class EmptyComment(CorpusError):
    def __init__(self) -> None:
        super().__init__("annotation comment must be non-empty")


class GenuineWithReasons(CorpusError):
    def __init__(self) -> None:
        super().__init__("a 'genuine' decision must not carry reason tags")


class ArtificialWithoutReasons(CorpusError):
    def __init__(self) -> None:
        super().__init__("an 'artificial' decision requires at least one reason tag")


class EmptyCorpus(CorpusError):
    def __init__(self) -> None:
        super().__init__("no samples to split")


class DegenerateRatios(CorpusError):
    def __init__(self) -> None:
        super().__init__("split ratios must not all be zero")


# ---------------------------------------------------------------------------
# Labels and the reason taxonomy
# ---------------------------------------------------------------------------


class Label(Enum):
    """Binary ground truth; BONA_FIDE is the positive class everywhere."""

    BONA_FIDE = "bonafide"
    SPOOF = "spoof"

    @classmethod
    def from_token(cls, token: str) -> "Label":
        """Map a model answer token ("Real"/"Fake") to a label."""
        if token == "Real":
            return cls.BONA_FIDE
        if token == "Fake":
            return cls.SPOOF
        raise ValueError(f"unknown answer token {token!r}")

    @property
    def token(self) -> str:
        return "Real" if self is Label.BONA_FIDE else "Fake"


# The fixed 14-item perceptual cue list shown to annotators. Immutable.
REASON_TAXONOMY: Mapping[int, str] = {
    1: "Lack of fluency or coherence",
    2: "Unnatural pauses",
    3: "Uniform pauses between words throughout the audio",
    4: "Unusual intonation patterns",
    5: "Insufficient variation in speaking style",
    6: "Incorrect stress in common words",
    7: "Mispronunciation of common words",
    8: "Unusual or inconsistent accent",
    9: "Atypical voice characteristics",
    10: "Excessively fast speech",
    11: "Incorrect reading of abbreviations",
    12: "Verbalization of typographical errors",
    13: "Word-by-word repetition in cases of tautology",
    14: "Other (please specify)",
}

OTHER_TAG_ID = 14
VALID_TAG_IDS = frozenset(REASON_TAXONOMY)


@dataclass(frozen=True)
class ReasonTag:
    """One selected cue from the taxonomy; free text only on "Other" (14)."""

    id: int
    other_text: str | None = None

    def __post_init__(self) -> None:
        if self.id not in VALID_TAG_IDS:
            raise ValueError(f"reason tag id {self.id} outside 1..14")
        if self.other_text is not None:
            if self.id != OTHER_TAG_ID:
                raise ValueError("other_text is only allowed on tag 14")
            if not self.other_text.strip():
                raise ValueError("other_text must be non-empty when provided")

    @property
    def canonical_name(self) -> str:
        return REASON_TAXONOMY[self.id]


# ---------------------------------------------------------------------------
# Samples and annotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AudioSample:
    id: str
    audio_path: str
    label: Label
    source: str
    language: str
    duration_s: float
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if self.duration_s < 0:
            raise ValueError(f"negative duration for sample {self.id!r}")


class Decision(Enum):
    GENUINE = "genuine"
    ARTIFICIAL = "artificial"


@dataclass(frozen=True)
class Annotation:
    """One annotator's questionnaire response for one sample."""

    annotator_id: str
    sample_id: str
    decision: Decision
    reasons: frozenset[ReasonTag]
    comment: str
    ts: datetime

    def __post_init__(self) -> None:
        if not self.comment.strip():
            raise EmptyComment()
        if self.decision is Decision.GENUINE and self.reasons:
            raise GenuineWithReasons()
        if self.decision is Decision.ARTIFICIAL and not self.reasons:
            raise ArtificialWithoutReasons()

    @property
    def reason_ids(self) -> frozenset[int]:
        return frozenset(tag.id for tag in self.reasons)

    @property
    def other_text(self) -> str | None:
        for tag in self.reasons:
            if tag.id == OTHER_TAG_ID and tag.other_text is not None:
                return tag.other_text
        return None

    def agrees_with(self, label: Label) -> bool:
        """True when the decision matches the ground-truth label."""
        if self.decision is Decision.GENUINE:
            return label is Label.BONA_FIDE
        return label is Label.SPOOF


class Corpus:
    """Immutable id -> AudioSample lookup with uniqueness enforced."""

    def __init__(self, samples: Iterable[AudioSample]):
        self._by_id: dict[str, AudioSample] = {}
        for sample in samples:
            if sample.id in self._by_id:
                raise DuplicateId(sample.id)
            self._by_id[sample.id] = sample

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    def __getitem__(self, sample_id: str) -> AudioSample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise UnknownSample(sample_id) from None

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[AudioSample]:
        return iter(self._by_id.values())

    def label_of(self, sample_id: str) -> Label:
        return self[sample_id].label


CorpusLike = Union[Corpus, Iterable[AudioSample]]


def as_corpus(samples: CorpusLike) -> Corpus:
    return samples if isinstance(samples, Corpus) else Corpus(samples)


# ---------------------------------------------------------------------------
# JSONL ingestion
# ---------------------------------------------------------------------------

_SAMPLE_FIELDS = ("id", "audio_path", "label", "source", "language", "duration_s")
_ANNOTATION_FIELDS = (
    "annotator_id",
    "sample_id",
    "decision",
    "reasons",
    "comment",
    "ts",
)

_LABEL_VOCAB = {"bonafide": Label.BONA_FIDE, "spoof": Label.SPOOF}


def _iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record is not an object")
            yield line_no, record


def _require(record: dict, name: str, line_no: int) -> object:
    if name not in record or record[name] is None:
        raise MissingField(name, line_no)
    return record[name]


def sample_from_record(record: dict, line_no: int = 0) -> AudioSample:
    for name in _SAMPLE_FIELDS:
        _require(record, name, line_no)
    label_token = record["label"]
    if label_token not in _LABEL_VOCAB:
        raise MalformedRecord(
            line_no, f"unknown label {label_token!r} (expected 'bonafide' or 'spoof')"
        )
    try:
        duration = float(record["duration_s"])
    except (TypeError, ValueError):
        raise MalformedRecord(line_no, f"bad duration_s {record['duration_s']!r}")
    extra = {k: v for k, v in record.items() if k not in _SAMPLE_FIELDS}
    try:
        return AudioSample(
            id=str(record["id"]),
            audio_path=str(record["audio_path"]),
            label=_LABEL_VOCAB[label_token],
            source=str(record["source"]),
            language=str(record["language"]),
            duration_s=duration,
            extra=extra,
        )
    except ValueError as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def sample_to_record(sample: AudioSample) -> dict:
    record = {
        "id": sample.id,
        "audio_path": sample.audio_path,
        "label": sample.label.value,
        "source": sample.source,
        "language": sample.language,
        "duration_s": sample.duration_s,
    }
    record.update(sample.extra)
    return record


def ingest_samples(path: str | Path) -> list[AudioSample]:
    """Load and validate a samples file; duplicate ids are rejected."""
    samples: list[AudioSample] = []
    seen: set[str] = set()
    for line_no, record in _iter_records(path):
        sample = sample_from_record(record, line_no)
        if sample.id in seen:
            raise DuplicateId(sample.id)
        seen.add(sample.id)
        samples.append(sample)
    return samples


def reasons_from_record(
    reason_ids: Sequence[int], other_text: str | None, line_no: int = 0
) -> frozenset[ReasonTag]:
    tags = set()
    for rid in reason_ids:
        if not isinstance(rid, int) or rid not in VALID_TAG_IDS:
            raise MalformedRecord(line_no, f"reason id {rid!r} outside 1..14")
        if rid == OTHER_TAG_ID and other_text is not None:
            tags.add(ReasonTag(rid, other_text))
        else:
            tags.add(ReasonTag(rid))
    if other_text is not None and OTHER_TAG_ID not in {t.id for t in tags}:
        raise MalformedRecord(line_no, "other_text given without reason tag 14")
    return frozenset(tags)


def annotation_from_record(record: dict, line_no: int = 0) -> Annotation:
    for name in _ANNOTATION_FIELDS:
        _require(record, name, line_no)
    decision_token = record["decision"]
    try:
        decision = Decision(decision_token)
    except ValueError:
        raise MalformedRecord(line_no, f"unknown decision {decision_token!r}")
    reasons_raw = record["reasons"]
    if not isinstance(reasons_raw, list):
        raise MalformedRecord(line_no, "reasons must be an array of integers")
    reasons = reasons_from_record(reasons_raw, record.get("other_text"), line_no)
    try:
        ts = datetime.fromisoformat(str(record["ts"]))
    except ValueError:
        raise MalformedRecord(line_no, f"bad ISO-8601 timestamp {record['ts']!r}")
    return Annotation(
        annotator_id=str(record["annotator_id"]),
        sample_id=str(record["sample_id"]),
        decision=decision,
        reasons=reasons,
        comment=str(record["comment"]),
        ts=ts,
    )


def annotation_to_record(annotation: Annotation) -> dict:
    return {
        "annotator_id": annotation.annotator_id,
        "sample_id": annotation.sample_id,
        "decision": annotation.decision.value,
        "reasons": sorted(annotation.reason_ids),
        "other_text": annotation.other_text,
        "comment": annotation.comment,
        "ts": annotation.ts.isoformat(),
    }


def ingest_annotations(path: str | Path, samples: CorpusLike) -> list[Annotation]:
    """Load annotations; every record must reference a known sample."""
    corpus = as_corpus(samples)
    annotations: list[Annotation] = []
    for line_no, record in _iter_records(path):
        annotation = annotation_from_record(record, line_no)
        if annotation.sample_id not in corpus:
            raise UnknownSample(annotation.sample_id)
        annotations.append(annotation)
    return annotations


def write_jsonl(records: Iterable[dict], path: str | Path) -> int:
    """Write records as one JSON object per line; returns the line count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            n += 1
    return n


# ---------------------------------------------------------------------------
# Split generation
# ---------------------------------------------------------------------------


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


_SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float]
    seed: int
    stratify_by: tuple[str, ...] = ("label", "source")

    def __post_init__(self) -> None:
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be three non-negative weights")
        if sum(self.ratios) <= 0:
            raise DegenerateRatios()


def _stratum_key(sample: AudioSample, fields: tuple[str, ...]) -> tuple[str, ...]:
    key = []
    for name in fields:
        if name == "label":
            key.append(sample.label.value)
        elif hasattr(sample, name):
            key.append(str(getattr(sample, name)))
        else:
            key.append(str(sample.extra.get(name, "")))
    return tuple(key)


def _apportion(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Largest-remainder apportionment of n items over three weights."""
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    counts = [int(x) for x in exact]
    remainders = [x - c for x, c in zip(exact, counts)]
    short = n - sum(counts)
    # Ties broken by split order (train, then val, then test).
    for idx in sorted(range(3), key=lambda i: (-remainders[i], i))[:short]:
        counts[idx] += 1
    return counts


def make_splits(samples: CorpusLike, spec: SplitSpec) -> dict[str, Split]:
    """Deterministic stratified partition of the corpus into train/val/test.

    Within each stratum, sizes follow largest-remainder apportionment of the
    ratio weights, so per-stratum proportions are within one sample of exact.
    """
    corpus = as_corpus(samples)
    if len(corpus) == 0:
        raise EmptyCorpus()
    strata: dict[tuple[str, ...], list[str]] = {}
    for sample in corpus:
        strata.setdefault(_stratum_key(sample, spec.stratify_by), []).append(sample.id)

    assignment: dict[str, Split] = {}
    for key in sorted(strata):
        ids = sorted(strata[key])
        stratum_seed = fnv1a_64(f"{spec.seed}|{'|'.join(key)}".encode("utf-8"))
        random.Random(stratum_seed).shuffle(ids)
        counts = _apportion(len(ids), spec.ratios)
        cursor = 0
        for split, count in zip(_SPLIT_ORDER, counts):
            for sample_id in ids[cursor : cursor + count]:
                assignment[sample_id] = split
            cursor += count
    return assignment
