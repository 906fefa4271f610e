"""Annotation campaign service: task serving, validation, live feedback.

State lives in memory and is made durable through an append-only JSONL
event log (one record per campaign creation, registration, response, and
status change) replayed at startup. Ground-truth labels are stored
server-side only; no annotator-facing payload ever contains them.

Annotators move through Active -> Retraining -> (Active | Excluded): the
first time the rolling accuracy window fills below the campaign floor the
annotator enters Retraining and the window restarts (a fresh evaluation
period); a second breach excludes them permanently.
"""
from __future__ import annotations

import json
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from ._rng import derive_seed, fnv1a_64
from .corpus import (
    AudioSample,
    Label,
    REASON_TAXONOMY,
    VALID_TAG_IDS,
    OTHER_TAG_ID,
    sample_from_record,
    sample_to_record,
)

DEFAULT_QUESTION = (
    "Assess whether the audio sample contains original (genuine) human speech "
    "or synthesized (artificial) speech"
)


class CampaignError(Exception):
    pass


class UnknownCampaign(CampaignError):
    def __init__(self, campaign_id: str):
        super().__init__(f"unknown campaign {campaign_id!r}")


class UnknownCampaignSample(CampaignError):
    def __init__(self, sample_id: str):
        super().__init__(f"sample {sample_id!r} is not part of this campaign")


class UnknownAnnotator(CampaignError):
    def __init__(self, annotator_id: str):
        super().__init__(f"unknown annotator {annotator_id!r}")


class ExcludedAnnotator(CampaignError):
    def __init__(self, annotator_id: str):
        super().__init__(f"annotator {annotator_id!r} has been excluded")


class WrongTask(CampaignError):
    def __init__(self, expected: str | None, got: str):
        super().__init__(f"current task is {expected!r}, response targets {got!r}")
        self.expected = expected
        self.got = got


class ValidationFailed(CampaignError):
    def __init__(self, field_name: str, rule: str):
        super().__init__(f"validation failed: {field_name} ({rule})")
        self.field = field_name
        self.rule = rule


class EmptyManifest(CampaignError):
    def __init__(self) -> None:
        super().__init__("campaign manifest is empty")


class DuplicateSample(CampaignError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample {sample_id!r} in manifest")


class Status:
    ACTIVE = "active"
    RETRAINING = "retraining"
    EXCLUDED = "excluded"


@dataclass
class Campaign:
    id: str
    samples: dict[str, AudioSample]
    sample_ids: list[str]
    question_text: str = DEFAULT_QUESTION
    shuffle_seed: int = 0
    feedback_window: int = 30
    min_accuracy: float = 0.75
    per_sample_fee: float = 0.0
    min_comment_words: int = 5
    next_annotator_number: int = 1


@dataclass
class Session:
    annotator_id: str
    campaign_id: str
    served_order: list[str]
    cursor: int = 0
    status: str = Status.ACTIVE
    breaches: int = 0
    window: deque = field(default_factory=deque)
    n_correct: int = 0
    responses: list[dict] = field(default_factory=list)
    seen_keys: dict[str, dict] = field(default_factory=dict)

    @property
    def n_submitted(self) -> int:
        return len(self.responses)

    def rolling_accuracy(self) -> float | None:
        if not self.window:
            return None
        return sum(self.window) / len(self.window)

    def lifetime_accuracy(self) -> float | None:
        if not self.responses:
            return None
        return self.n_correct / len(self.responses)


class EventLog:
    """Append-only JSONL log; pass path=None for a memory-only service."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None

    def replay(self) -> Iterable[dict]:
        if self.path is None or not self.path.exists():
            return []
        with open(self.path, "r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def append(self, event: dict) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")


class CampaignService:
    """In-process campaign state machine; the HTTP app is a thin wrapper.

    All mutations run under a single lock, so concurrent HTTP sessions
    serialize through one writer per service instance.
    """

    def __init__(self, log_path: str | Path | None = None):
        self._lock = threading.RLock()
        self._campaigns: dict[str, Campaign] = {}
        self._sessions: dict[tuple[str, str], Session] = {}
        self._log = EventLog(log_path)
        self._replaying = False
        for event in self._log.replay():
            self._apply(event)

    # -- event handling ----------------------------------------------------

    def _apply(self, event: dict) -> None:
        self._replaying = True
        try:
            kind = event.get("event")
            if kind == "campaign_created":
                config = dict(event["config"])
                samples = [sample_from_record(r) for r in event["samples"]]
                self.create_campaign(samples, **config)
            elif kind == "annotator_registered":
                self.register_annotator(event["campaign_id"])
            elif kind == "response_submitted":
                self.submit_response(
                    event["campaign_id"],
                    event["annotator_id"],
                    event["response"],
                    ts=event["ts"],
                )
            # status_changed events are derived audit records; replaying the
            # responses regenerates them.
        finally:
            self._replaying = False

    def _record(self, event: dict) -> None:
        if not self._replaying:
            self._log.append(event)

    # -- campaign lifecycle ------------------------------------------------

    def create_campaign(
        self,
        manifest: Sequence[AudioSample],
        campaign_id: str | None = None,
        question_text: str = DEFAULT_QUESTION,
        shuffle_seed: int = 0,
        feedback_window: int = 30,
        min_accuracy: float = 0.75,
        per_sample_fee: float = 0.0,
        min_comment_words: int = 5,
    ) -> Campaign:
        if not manifest:
            raise EmptyManifest()
        if feedback_window < 1:
            raise ValidationFailed("feedback_window", "must be >= 1")
        samples: dict[str, AudioSample] = {}
        for sample in manifest:
            if sample.id in samples:
                raise DuplicateSample(sample.id)
            samples[sample.id] = sample
        with self._lock:
            if campaign_id is None:
                campaign_id = f"c{len(self._campaigns) + 1:04d}"
            if campaign_id in self._campaigns:
                raise ValidationFailed("id", "campaign id already exists")
            campaign = Campaign(
                id=campaign_id,
                samples=samples,
                sample_ids=[s.id for s in manifest],
                question_text=question_text,
                shuffle_seed=shuffle_seed,
                feedback_window=feedback_window,
                min_accuracy=min_accuracy,
                per_sample_fee=per_sample_fee,
                min_comment_words=min_comment_words,
            )
            self._campaigns[campaign_id] = campaign
            self._record(
                {
                    "event": "campaign_created",
                    "config": {
                        "campaign_id": campaign_id,
                        "question_text": question_text,
                        "shuffle_seed": shuffle_seed,
                        "feedback_window": feedback_window,
                        "min_accuracy": min_accuracy,
                        "per_sample_fee": per_sample_fee,
                        "min_comment_words": min_comment_words,
                    },
                    "samples": [sample_to_record(s) for s in manifest],
                }
            )
            return campaign

    def _campaign(self, campaign_id: str) -> Campaign:
        try:
            return self._campaigns[campaign_id]
        except KeyError:
            raise UnknownCampaign(campaign_id) from None

    def _session(self, campaign_id: str, annotator_id: str) -> Session:
        self._campaign(campaign_id)
        try:
            return self._sessions[(campaign_id, annotator_id)]
        except KeyError:
            raise UnknownAnnotator(annotator_id) from None

    def register_annotator(self, campaign_id: str) -> str:
        """Issue an anonymized annotator token and seed their task order.

        Tokens derive from the registration counter and the campaign
        shuffle seed, so replaying a script against a fresh instance
        reproduces identical identities and orders.
        """
        with self._lock:
            campaign = self._campaign(campaign_id)
            number = campaign.next_annotator_number
            campaign.next_annotator_number += 1
            suffix = format(
                fnv1a_64(f"{number}|{campaign.shuffle_seed}".encode("utf-8")), "016x"
            )
            annotator_id = f"a{number:03d}-{suffix[:10]}"
            order = list(campaign.sample_ids)
            random.Random(derive_seed(annotator_id, str(campaign.shuffle_seed))).shuffle(order)
            self._sessions[(campaign_id, annotator_id)] = Session(
                annotator_id=annotator_id, campaign_id=campaign_id, served_order=order
            )
            self._record(
                {
                    "event": "annotator_registered",
                    "campaign_id": campaign_id,
                    "annotator_id": annotator_id,
                }
            )
            return annotator_id

    # -- task serving ------------------------------------------------------

    def next_sample(self, campaign_id: str, annotator_id: str) -> dict:
        """Current task for the annotator (idempotent until they submit)."""
        with self._lock:
            campaign = self._campaign(campaign_id)
            session = self._session(campaign_id, annotator_id)
            if session.status == Status.EXCLUDED:
                raise ExcludedAnnotator(annotator_id)
            if session.cursor >= len(session.served_order):
                return {"done": True, "n_submitted": session.n_submitted}
            sample_id = session.served_order[session.cursor]
            return {
                "done": False,
                "sample_id": sample_id,
                "audio_url": f"/campaigns/{campaign_id}/audio/{sample_id}",
                "question": campaign.question_text,
                "reasons": [
                    {"id": tag_id, "name": name} for tag_id, name in REASON_TAXONOMY.items()
                ],
                "position": session.cursor + 1,
                "total": len(session.served_order),
                "min_comment_words": campaign.min_comment_words,
            }

    # -- response validation and submission --------------------------------

    @staticmethod
    def _word_count(text: str) -> int:
        return len(text.split())

    def _validate(self, campaign: Campaign, payload: dict) -> tuple[str, list[int], str | None, str]:
        decision = payload.get("decision")
        if decision not in ("genuine", "artificial"):
            raise ValidationFailed("decision", "must be 'genuine' or 'artificial'")
        comment = str(payload.get("comment") or "")
        if self._word_count(comment) < campaign.min_comment_words:
            raise ValidationFailed("comment", "min_words")
        reasons_raw = payload.get("reasons") or []
        if not isinstance(reasons_raw, list):
            raise ValidationFailed("reasons", "must be an array of integers")
        reasons: list[int] = []
        for tag in reasons_raw:
            if not isinstance(tag, int) or tag not in VALID_TAG_IDS:
                raise ValidationFailed("reasons", "unknown_tag")
            reasons.append(tag)
        other_text = payload.get("other_text")
        if decision == "genuine" and reasons:
            raise ValidationFailed("reasons", "forbidden_for_genuine")
        if decision == "artificial" and not reasons:
            raise ValidationFailed("reasons", "required_for_artificial")
        if OTHER_TAG_ID in reasons and not (other_text and str(other_text).strip()):
            raise ValidationFailed("other_text", "required_for_other")
        if other_text and OTHER_TAG_ID not in reasons:
            raise ValidationFailed("other_text", "requires_tag_14")
        return decision, sorted(set(reasons)), other_text, comment

    def submit_response(
        self, campaign_id: str, annotator_id: str, payload: dict, ts: str | None = None
    ) -> dict:
        with self._lock:
            campaign = self._campaign(campaign_id)
            session = self._session(campaign_id, annotator_id)
            if session.status == Status.EXCLUDED:
                raise ExcludedAnnotator(annotator_id)

            key = payload.get("idempotency_key")
            if key is not None and key in session.seen_keys:
                return session.seen_keys[key]

            if session.cursor >= len(session.served_order):
                raise WrongTask(None, str(payload.get("sample_id")))
            expected = session.served_order[session.cursor]
            if payload.get("sample_id") != expected:
                raise WrongTask(expected, str(payload.get("sample_id")))

            decision, reasons, other_text, comment = self._validate(campaign, payload)
            truth = campaign.samples[expected].label
            correct = (decision == "genuine") == (truth is Label.BONA_FIDE)

            ts = ts or datetime.now(timezone.utc).isoformat()
            stored = {
                "annotator_id": annotator_id,
                "sample_id": expected,
                "decision": decision,
                "reasons": reasons,
                "other_text": other_text,
                "comment": comment,
                "ts": ts,
            }
            session.responses.append(stored)
            session.cursor += 1
            session.n_correct += int(correct)
            session.window.append(int(correct))
            if len(session.window) > campaign.feedback_window:
                session.window.popleft()

            if len(session.window) == campaign.feedback_window:
                accuracy = sum(session.window) / len(session.window)
                if accuracy < campaign.min_accuracy:
                    session.breaches += 1
                    if session.breaches >= 2:
                        self._change_status(session, Status.EXCLUDED, "second breach")
                    else:
                        self._change_status(session, Status.RETRAINING, "first breach")
                        session.window.clear()
                elif session.status == Status.RETRAINING:
                    self._change_status(session, Status.ACTIVE, "recovered")

            ack = {
                "accepted": True,
                "sample_id": expected,
                "n_submitted": session.n_submitted,
                "rolling_accuracy": session.rolling_accuracy(),
                "lifetime_accuracy": session.lifetime_accuracy(),
                "status": session.status,
            }
            if key is not None:
                session.seen_keys[key] = ack
            self._record(
                {
                    "event": "response_submitted",
                    "campaign_id": campaign_id,
                    "annotator_id": annotator_id,
                    "response": payload,
                    "ts": ts,
                }
            )
            return ack

    def _change_status(self, session: Session, status: str, trigger: str) -> None:
        session.status = status
        self._record(
            {
                "event": "status_changed",
                "campaign_id": session.campaign_id,
                "annotator_id": session.annotator_id,
                "status": status,
                "trigger": trigger,
            }
        )

    # -- stats, export, audio ----------------------------------------------

    def annotator_stats(self, campaign_id: str, annotator_id: str) -> dict:
        with self._lock:
            campaign = self._campaign(campaign_id)
            session = self._session(campaign_id, annotator_id)
            lifetime = session.lifetime_accuracy()
            tier_eligible = None
            if lifetime is not None:
                if lifetime >= 0.85:
                    tier_eligible = "high"
                elif lifetime >= campaign.min_accuracy:
                    tier_eligible = "medium"
                else:
                    tier_eligible = "excluded"
            return {
                "annotator_id": annotator_id,
                "n_submitted": session.n_submitted,
                "rolling_accuracy": session.rolling_accuracy(),
                "lifetime_accuracy": lifetime,
                "status": session.status,
                "fee": round(session.n_submitted * campaign.per_sample_fee, 10),
                "tier_eligible": tier_eligible,
            }

    def export_annotations(self, campaign_id: str) -> list[dict]:
        """All stored responses in the annotations-file schema."""
        with self._lock:
            self._campaign(campaign_id)
            records = []
            for (cid, _), session in sorted(self._sessions.items()):
                if cid == campaign_id:
                    records.extend(session.responses)
            return records

    def audio_path(self, campaign_id: str, sample_id: str) -> str:
        with self._lock:
            campaign = self._campaign(campaign_id)
            if sample_id not in campaign.samples:
                raise UnknownCampaignSample(sample_id)
            return campaign.samples[sample_id].audio_path


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def build_app(service: CampaignService):
    """FastAPI wrapper exposing the campaign endpoints."""
    from fastapi import Body, FastAPI, Request
    from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse

    app = FastAPI(title="annotation campaign service")

    def _error(status_code: int, exc: Exception) -> JSONResponse:
        body = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, ValidationFailed):
            body["field"] = exc.field
            body["rule"] = exc.rule
        return JSONResponse(status_code=status_code, content=body)

    @app.exception_handler(CampaignError)
    async def campaign_error_handler(request: Request, exc: CampaignError):
        if isinstance(exc, (UnknownCampaign, UnknownAnnotator, UnknownCampaignSample)):
            return _error(404, exc)
        if isinstance(exc, ExcludedAnnotator):
            return _error(403, exc)
        if isinstance(exc, WrongTask):
            return _error(409, exc)
        return _error(422, exc)

    @app.post("/campaigns", status_code=201)
    def create_campaign(body: dict = Body(...)):
        samples = [sample_from_record(r) for r in body.get("samples", [])]
        config = {
            key: body[key]
            for key in (
                "campaign_id",
                "question_text",
                "shuffle_seed",
                "feedback_window",
                "min_accuracy",
                "per_sample_fee",
                "min_comment_words",
            )
            if key in body
        }
        campaign = service.create_campaign(samples, **config)
        return {
            "campaign_id": campaign.id,
            "n_samples": len(campaign.sample_ids),
            "question": campaign.question_text,
            "feedback_window": campaign.feedback_window,
        }

    @app.post("/campaigns/{campaign_id}/annotators", status_code=201)
    def register(campaign_id: str):
        return {"annotator_id": service.register_annotator(campaign_id)}

    @app.get("/campaigns/{campaign_id}/next")
    def next_task(campaign_id: str, annotator: str):
        return service.next_sample(campaign_id, annotator)

    @app.post("/campaigns/{campaign_id}/responses")
    def submit(campaign_id: str, body: dict = Body(...)):
        annotator_id = body.get("annotator_id")
        if not annotator_id:
            raise ValidationFailed("annotator_id", "required")
        return service.submit_response(campaign_id, str(annotator_id), body)

    @app.get("/campaigns/{campaign_id}/annotators/{annotator_id}/stats")
    def stats(campaign_id: str, annotator_id: str):
        return service.annotator_stats(campaign_id, annotator_id)

    @app.get("/campaigns/{campaign_id}/export")
    def export(campaign_id: str):
        lines = [
            json.dumps(record, ensure_ascii=False)
            for record in service.export_annotations(campaign_id)
        ]
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""))

    @app.get("/campaigns/{campaign_id}/audio/{sample_id}")
    def audio(campaign_id: str, sample_id: str):
        return FileResponse(service.audio_path(campaign_id, sample_id), media_type="audio/wav")

    return app
