"""Parsing and canonical serialization of model output formats.

Two emission formats exist: a bare hard-label verdict ("Final Answer: Real"
/ "Final Answer: Fake") and a structured trace

    <think>...</think><reasons>[...]</reasons><answer>Real|Fake</answer>

Strict mode accepts only the canonical grammar (whitespace between sections
is tolerated so multi-line emissions still qualify); lenient mode recovers
traces from case variants, reordered sections, parenthesized tag lists like
"(4),(9)", and surrounding prose.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .corpus import Label, VALID_TAG_IDS, _iter_records

# ---------------------------------------------------------------------------
# Errors and warnings
# ---------------------------------------------------------------------------


class TraceParseError(ValueError):
    """Base class for all trace / hard-label parse failures."""


class MissingSection(TraceParseError):
    def __init__(self, section: str):
        super().__init__(f"missing <{section}> section")
        self.section = section


class DuplicateSection(TraceParseError):
    def __init__(self, section: str):
        super().__init__(f"duplicate <{section}> section")
        self.section = section


class MalformedReasonList(TraceParseError):
    def __init__(self, content: str):
        super().__init__(f"malformed reason list {content!r}")
        self.content = content


class UnknownTag(TraceParseError):
    def __init__(self, tag_id: int):
        super().__init__(f"reason tag {tag_id} outside 1..14")
        self.tag_id = tag_id


class InvalidAnswerToken(TraceParseError):
    def __init__(self, token: str):
        super().__init__(f"invalid answer token {token!r}")
        self.token = token


class UnexpectedText(TraceParseError):
    """Strict mode only: stray text or misordered sections."""

    def __init__(self, detail: str):
        super().__init__(detail)


class NoAnswerFound(TraceParseError):
    def __init__(self) -> None:
        super().__init__("no final answer found")


class AmbiguousAnswer(TraceParseError):
    def __init__(self) -> None:
        super().__init__("both Real and Fake final answers present")


class RealWithReasonsWarning(UserWarning):
    """A Real answer carrying reason tags; legal but unusual."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


class ParseMode(Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class ReasoningTrace:
    think: str
    reasons: frozenset[int]
    answer: Label

    def __post_init__(self) -> None:
        bad = set(self.reasons) - VALID_TAG_IDS
        if bad:
            raise UnknownTag(min(bad))


# ---------------------------------------------------------------------------
# Structured trace parsing
# ---------------------------------------------------------------------------

_SECTIONS = ("think", "reasons", "answer")

_STRICT_FULL = re.compile(
    r"\s*<think>(.*?)</think>\s*<reasons>(.*?)</reasons>\s*<answer>(.*?)</answer>\s*",
    re.DOTALL,
)
_STRICT_REASONS = re.compile(r"\[(\d+(?:,\d+)*)?\]")
_LENIENT_ELEMENT = re.compile(r"\(?\s*(\d+)\s*\)?")


def _section_pattern(section: str, lenient: bool) -> re.Pattern:
    flags = re.DOTALL | (re.IGNORECASE if lenient else 0)
    return re.compile(rf"<{section}>(.*?)</{section}>", flags)


def _extract_sections(raw: str, lenient: bool) -> dict[str, str]:
    contents = {}
    for section in _SECTIONS:
        matches = _section_pattern(section, lenient).findall(raw)
        if not matches:
            raise MissingSection(section)
        if len(matches) > 1:
            raise DuplicateSection(section)
        contents[section] = matches[0]
    return contents


def _parse_reason_ids(content: str, lenient: bool) -> frozenset[int]:
    if lenient:
        body = content.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1].strip()
        # Tables print "--" for tagless rows; treat it as the empty set.
        if body in ("", "-", "--"):
            return frozenset()
        ids = []
        for element in body.split(","):
            match = _LENIENT_ELEMENT.fullmatch(element.strip())
            if not match:
                raise MalformedReasonList(content)
            ids.append(int(match.group(1)))
    else:
        match = _STRICT_REASONS.fullmatch(content)
        if not match:
            raise MalformedReasonList(content)
        ids = [int(x) for x in match.group(1).split(",")] if match.group(1) else []
    for tag_id in ids:
        if tag_id not in VALID_TAG_IDS:
            raise UnknownTag(tag_id)
    return frozenset(ids)


def _parse_answer_token(content: str, lenient: bool) -> Label:
    if lenient:
        token = content.strip().rstrip(".!").strip()
        if token.casefold() == "real":
            return Label.BONA_FIDE
        if token.casefold() == "fake":
            return Label.SPOOF
        raise InvalidAnswerToken(content.strip())
    if content in ("Real", "Fake"):
        return Label.from_token(content)
    raise InvalidAnswerToken(content)


def parse_trace(raw: str, mode: ParseMode = ParseMode.STRICT) -> ReasoningTrace:
    """Parse a structured model emission into a ReasoningTrace."""
    lenient = mode is ParseMode.LENIENT
    sections = _extract_sections(raw, lenient)
    reasons = _parse_reason_ids(sections["reasons"], lenient)
    answer = _parse_answer_token(sections["answer"], lenient)
    think = sections["think"].strip() if lenient else sections["think"]

    if not lenient:
        if not _STRICT_FULL.fullmatch(raw):
            raise UnexpectedText("text outside the three sections, or sections misordered")
        if answer is Label.BONA_FIDE and reasons:
            warnings.warn(
                "Real answer carries reason tags", RealWithReasonsWarning, stacklevel=2
            )
    return ReasoningTrace(think=think, reasons=reasons, answer=answer)


def serialize_trace(trace: ReasoningTrace) -> str:
    """Canonical form: ascending bare-integer reasons, Real/Fake answer."""
    ids = ",".join(str(i) for i in sorted(trace.reasons))
    return (
        f"<think>{trace.think}</think>"
        f"<reasons>[{ids}]</reasons>"
        f"<answer>{trace.answer.token}</answer>"
    )


# ---------------------------------------------------------------------------
# Hard-label parsing
# ---------------------------------------------------------------------------

_HARD_STRICT = {"Final Answer: Real": Label.BONA_FIDE, "Final Answer: Fake": Label.SPOOF}
_HARD_LENIENT = re.compile(r"final answer:\s*(real|fake)")


def parse_hard_label(raw: str, mode: ParseMode = ParseMode.STRICT) -> Label:
    """Extract the final-answer verdict from a hard-label emission.

    Strict mode requires the exact token as its own line and rejects inputs
    where both verdicts appear; lenient mode case-folds, tolerates
    surrounding prose, and takes the last occurrence.
    """
    if mode is ParseMode.STRICT:
        found = {
            label for line in raw.splitlines() if (label := _HARD_STRICT.get(line.strip()))
        }
        if len(found) == 2:
            raise AmbiguousAnswer()
        if not found:
            raise NoAnswerFound()
        return found.pop()
    matches = _HARD_LENIENT.findall(raw.casefold())
    if not matches:
        raise NoAnswerFound()
    return Label.BONA_FIDE if matches[-1] == "real" else Label.SPOOF


# ---------------------------------------------------------------------------
# Predictions file (sample_id, raw_output)
# ---------------------------------------------------------------------------


def ingest_predictions(path: str | Path) -> list[tuple[str, str]]:
    """Load a predictions file of raw model emissions keyed by sample id."""
    from .corpus import MissingField

    out = []
    for line_no, record in _iter_records(path):
        for name in ("sample_id", "raw_output"):
            if name not in record or record[name] is None:
                raise MissingField(name, line_no)
        out.append((str(record["sample_id"]), str(record["raw_output"])))
    return out


def predictions_to_records(predictions: Iterable[tuple[str, str]]) -> Iterable[dict]:
    for sample_id, raw_output in predictions:
        yield {"sample_id": sample_id, "raw_output": raw_output}
