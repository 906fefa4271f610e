"""LLM-judge client: prompt rendering, response parsing, batch scoring.

The wire protocol is a chat-completion style POST with the whole prompt as
one user message, so any OpenAI-compatible endpoint can act as the judge.
A deterministic offline mock ships alongside the HTTP transport; the full
test suite runs without network access.
"""
from __future__ import annotations

import json
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from ._rng import fnv1a_64
from .corpus import Label
from .metrics import JudgeAggregate, aggregate_judge_scores
from .rewards import JudgeScore
from .traceparse import ReasoningTrace, serialize_trace

PROMPT_VERSION = "1"
DEFAULT_RUBRIC = ("coverage", "relevance", "logic", "helpfulness")

ENV_API_KEY = "SDDKIT_JUDGE_API_KEY"
ENV_BASE_URL = "SDDKIT_JUDGE_BASE_URL"


class JudgeError(Exception):
    pass


class JudgeParseError(JudgeError, ValueError):
    pass


class NoBlockFound(JudgeParseError):
    def __init__(self) -> None:
        super().__init__("no fenced score block in judge response")


class MissingCriterion(JudgeParseError):
    def __init__(self, name: str):
        super().__init__(f"criterion {name!r} missing from score block")
        self.name = name


class OutOfRange(JudgeParseError):
    def __init__(self, name: str, value: int):
        super().__init__(f"criterion {name!r} score {value} outside 0..10")
        self.name = name
        self.value = value


class TransportError(JudgeError):
    pass


class PartialBatch(JudgeError):
    def __init__(self, sample_ids: Sequence[str]):
        super().__init__(f"{len(sample_ids)} sample(s) failed judging: {list(sample_ids)}")
        self.sample_ids = tuple(sample_ids)


# ---------------------------------------------------------------------------
# Requests and configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeRequest:
    sample_id: str
    trace: ReasoningTrace
    truth: Label
    reference_comment: str | None = None
    rubric: tuple[str, ...] = DEFAULT_RUBRIC

    def __post_init__(self) -> None:
        if len(self.rubric) != 4 or len(set(self.rubric)) != 4:
            raise ValueError("rubric must name four distinct criteria")


@dataclass(frozen=True)
class JudgeConfig:
    endpoint_url: str = ""
    model_name: str = ""
    n_runs: int = 5
    max_retries: int = 3
    timeout_s: float = 60.0
    max_in_flight: int = 4
    transcript_path: str | None = None

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


@dataclass(frozen=True)
class JudgeCallContext:
    sample_id: str
    run_index: int
    attempt: int
    rubric: tuple[str, ...]


class JudgeTransport(Protocol):
    def __call__(self, prompt: str, ctx: JudgeCallContext) -> str: ...


# ---------------------------------------------------------------------------
# Prompt rendering and response parsing
# ---------------------------------------------------------------------------

_PROMPT_HEADER = (
    "You are a strict auditor of spoken-deepfake reasoning. Judge only what the\n"
    "reasoning states about the audio; do not reward confident wording, length,\n"
    "or repetition of the verdict. Score each criterion from 0 to 10, where 10\n"
    "is reserved for reasoning that a careful human reviewer could not improve."
)


def render_prompt(req: JudgeRequest) -> str:
    """Deterministic judging prompt for one reasoning trace."""
    lines = [
        _PROMPT_HEADER,
        "",
        f"(prompt version {PROMPT_VERSION})",
        "",
        "Criteria:",
    ]
    for name in req.rubric:
        lines.append(f"- {name}: integer from 0 (worst) to 10 (best)")
    lines += [
        "",
        "Model reasoning under review:",
        serialize_trace(req.trace),
        "",
        f"Ground-truth verdict: {req.truth.token}",
    ]
    if req.reference_comment is not None:
        lines += ["", "Human reference comment:", req.reference_comment]
    lines += [
        "",
        "Reply with one integer per criterion inside a fenced block, exactly:",
        "```",
    ]
    for name in req.rubric:
        lines.append(f"{name}: <0-10>")
    lines += ["```"]
    return "\n".join(lines)


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def parse_judge_response(raw: str, rubric: Sequence[str] = DEFAULT_RUBRIC) -> JudgeScore:
    """Extract one 0..10 integer per criterion from the fenced block."""
    block_match = _FENCE.search(raw)
    if not block_match:
        raise NoBlockFound()
    block = block_match.group(1)
    values = []
    for name in rubric:
        pattern = re.compile(
            rf"^\s*{re.escape(name)}\s*[:=]\s*(-?\d+)\s*$", re.IGNORECASE | re.MULTILINE
        )
        match = pattern.search(block)
        if not match:
            raise MissingCriterion(name)
        value = int(match.group(1))
        if not 0 <= value <= 10:
            raise OutOfRange(name, value)
        values.append(value)
    return JudgeScore(*values)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


class HttpJudgeTransport:
    """Chat-completion POST to an OpenAI-compatible endpoint.

    The API key and base URL fall back to the SDDKIT_JUDGE_API_KEY and
    SDDKIT_JUDGE_BASE_URL environment variables.
    """

    def __init__(self, cfg: JudgeConfig):
        import httpx

        base_url = cfg.endpoint_url or os.environ.get(ENV_BASE_URL, "")
        if not base_url:
            raise TransportError("no judge endpoint configured")
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = cfg.model_name
        headers = {}
        api_key = os.environ.get(ENV_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=cfg.timeout_s, headers=headers)

    def __call__(self, prompt: str, ctx: JudgeCallContext) -> str:
        import httpx

        body = {
            "model": self._model,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = self._client.post(self._url, json=body)
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


def mock_criterion_score(sample_id: str, run_index: int, criterion: str) -> int:
    """Deterministic 0..10 score hashed from (sample_id, run, criterion)."""
    return fnv1a_64(f"{sample_id}|{run_index}|{criterion}".encode("utf-8")) % 11


class MockJudgeTransport:
    """Offline judge with hash-deterministic scores.

    ``fail_first`` makes the first N calls per (sample, run) raise, for
    retry testing; ``always_fail`` exhausts every retry budget.
    """

    def __init__(self, fail_first: int = 0, always_fail: bool = False):
        self.fail_first = fail_first
        self.always_fail = always_fail
        self.calls: list[JudgeCallContext] = []
        self._lock = threading.Lock()

    def __call__(self, prompt: str, ctx: JudgeCallContext) -> str:
        with self._lock:
            self.calls.append(ctx)
        if self.always_fail or ctx.attempt < self.fail_first:
            raise TransportError(f"mock failure (attempt {ctx.attempt})")
        lines = ["```"]
        for name in ctx.rubric:
            lines.append(f"{name}: {mock_criterion_score(ctx.sample_id, ctx.run_index, name)}")
        lines.append("```")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Batch orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeBatchResult:
    # sample_id -> one JudgeScore per run, only for fully scored samples
    scores: dict[str, tuple[JudgeScore, ...]]
    failed: tuple[str, ...]
    errors: tuple[tuple[str, int, str], ...]  # (sample_id, run_index, message)
    aggregate: JudgeAggregate | None

    def raise_if_partial(self) -> None:
        if self.failed:
            raise PartialBatch(self.failed)


class _Transcript:
    def __init__(self, path: str | Path | None):
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self._lock = threading.Lock()

    def record(self, ctx: JudgeCallContext, prompt: str, response: str, ok: bool) -> None:
        if self._fh is None:
            return
        entry = {
            "sample_id": ctx.sample_id,
            "run_index": ctx.run_index,
            "attempt": ctx.attempt,
            "prompt": prompt,
            "response": response,
            "ok": ok,
        }
        with self._lock:
            self._fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def _score_request(
    req: JudgeRequest, cfg: JudgeConfig, transport: JudgeTransport, transcript: _Transcript
) -> tuple[str, list[JudgeScore], list[tuple[int, str]]]:
    prompt = render_prompt(req)
    scores: list[JudgeScore] = []
    failures: list[tuple[int, str]] = []
    for run_index in range(cfg.n_runs):
        last_error = "no attempts made"
        for attempt in range(cfg.max_retries + 1):
            ctx = JudgeCallContext(req.sample_id, run_index, attempt, req.rubric)
            try:
                response = transport(prompt, ctx)
            except TransportError as exc:
                last_error = str(exc)
                transcript.record(ctx, prompt, last_error, ok=False)
                continue
            try:
                score = parse_judge_response(response, req.rubric)
            except JudgeParseError as exc:
                last_error = str(exc)
                transcript.record(ctx, prompt, response, ok=False)
                continue
            transcript.record(ctx, prompt, response, ok=True)
            scores.append(score)
            break
        else:
            failures.append((run_index, last_error))
    return req.sample_id, scores, failures


def judge_many(
    requests: Sequence[JudgeRequest],
    cfg: JudgeConfig,
    transport: JudgeTransport | None = None,
) -> JudgeBatchResult:
    """Score every request n_runs times and aggregate.

    Malformed responses and transport failures are retried up to
    max_retries extra attempts; samples still failing any run are dropped
    from aggregation and listed in ``failed`` (the batch never aborts).
    """
    if transport is None:
        transport = HttpJudgeTransport(cfg)
    transcript = _Transcript(cfg.transcript_path)
    try:
        if cfg.max_in_flight == 1 or len(requests) <= 1:
            outcomes = [_score_request(r, cfg, transport, transcript) for r in requests]
        else:
            with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
                outcomes = list(
                    pool.map(lambda r: _score_request(r, cfg, transport, transcript), requests)
                )
    finally:
        transcript.close()

    scores: dict[str, tuple[JudgeScore, ...]] = {}
    failed: list[str] = []
    errors: list[tuple[str, int, str]] = []
    for sample_id, run_scores, failures in outcomes:
        if failures:
            failed.append(sample_id)
            errors.extend((sample_id, run, message) for run, message in failures)
        else:
            scores[sample_id] = tuple(run_scores)

    aggregate = None
    if scores:
        runs = [
            [scores[sample_id][run].mean for sample_id in scores]
            for run in range(cfg.n_runs)
        ]
        aggregate = aggregate_judge_scores(runs)
    return JudgeBatchResult(
        scores=scores, failed=tuple(failed), errors=tuple(errors), aggregate=aggregate
    )
