from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

from sddkit.corpus import Annotation, AudioSample, Decision, Label, ReasonTag
from sddkit.grounding import AudioBuffer, write_wav

COMMENT = "uniform robotic pacing with oddly flat intonation throughout"
TS = datetime(2025, 11, 3, 12, 0, 0, tzinfo=timezone.utc)


def make_sample(i: int, label: Label | None = None, source: str = "tts-a") -> AudioSample:
    if label is None:
        label = Label.BONA_FIDE if i % 2 == 0 else Label.SPOOF
    return AudioSample(
        id=f"s{i:03d}",
        audio_path=f"/audio/s{i:03d}.wav",
        label=label,
        source=source,
        language="en",
        duration_s=3.5,
    )


def make_annotation(
    annotator_id: str,
    sample_id: str,
    decision: Decision,
    reason_ids: tuple[int, ...] = (),
    other_text: str | None = None,
    comment: str = COMMENT,
) -> Annotation:
    reasons = frozenset(
        ReasonTag(i, other_text) if i == 14 else ReasonTag(i) for i in reason_ids
    )
    return Annotation(
        annotator_id=annotator_id,
        sample_id=sample_id,
        decision=decision,
        reasons=reasons,
        comment=comment,
        ts=TS,
    )


def write_jsonl_file(path: Path, records: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def samples10() -> list[AudioSample]:
    return [make_sample(i) for i in range(10)]


@pytest.fixture
def sine_wav(tmp_path: Path) -> Path:
    """One second of a half-scale 220 Hz tone at 16 kHz."""
    sr = 16000
    t = np.arange(sr) / sr
    path = tmp_path / "tone.wav"
    write_wav(AudioBuffer(sr, 0.5 * np.sin(2 * np.pi * 220 * t)), path)
    return path
