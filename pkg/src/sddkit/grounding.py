"""Deterministic audio perturbations, PCM WAV I/O, and grounding checks.

Perturbations (Gaussian noise at a target SNR, time masking, gain) are
embedded so that a reasoning trace can be checked against real, audible
evidence. Determinism is absolute: the noise generator is a fixed
SplitMix64 + Box-Muller stream seeded from FNV-1a of (sample_id, salt),
so the same input bytes and spec produce the same output bytes on any
machine.

Only 16-bit PCM mono WAV is handled; stereo and float files are rejected
rather than silently converted, because the bit-exactness contract is only
meaningful with a single canonical sample format.
"""
from __future__ import annotations

import itertools
import json
import math
import re
import wave
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from ._rng import derive_seed, fnv1a_64, gaussian_stream  # noqa: F401  (re-exported)
from .traceparse import ReasoningTrace

LEXICON_VERSION = "1"
_DEFAULT_LEXICON_PATH = Path(__file__).parent / "data" / "lexicon.json"


class GroundingError(ValueError):
    pass


class InvalidSampleRate(GroundingError):
    def __init__(self, rate: int):
        super().__init__(f"invalid sample rate {rate}")
        self.rate = rate


class UnsupportedWav(GroundingError):
    pass


class MaskOutOfRange(GroundingError):
    def __init__(self, start_s: float, len_s: float, duration_s: float):
        super().__init__(
            f"mask [{start_s}, {start_s + len_s}) outside clip of {duration_s:.3f} s"
        )


class SilentSignal(GroundingError):
    def __init__(self) -> None:
        super().__init__("cannot target an SNR on an all-zero signal")


class MissingLexiconEntry(GroundingError):
    def __init__(self, kind: str):
        super().__init__(f"lexicon has no word list for kind {kind!r}")
        self.kind = kind


# ---------------------------------------------------------------------------
# Audio buffer and WAV I/O
# ---------------------------------------------------------------------------

_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    """Mono float audio in [-1, 1]."""

    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise InvalidSampleRate(self.sample_rate_hz)
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise GroundingError("buffer must be mono (1-D)")
        if arr.size and (arr.max() > 1.0 or arr.min() < -1.0):
            raise GroundingError("samples outside [-1, 1]")
        object.__setattr__(self, "samples", arr)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def power(self) -> float:
        """Mean square over the whole clip."""
        if not len(self.samples):
            return 0.0
        return float(np.mean(self.samples**2))


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a RIFF PCM 16-bit mono WAV; anything else is rejected."""
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getnchannels() != 1:
                raise UnsupportedWav(f"expected mono, got {wav.getnchannels()} channels")
            if wav.getsampwidth() != 2:
                raise UnsupportedWav(
                    f"expected 16-bit PCM, got {8 * wav.getsampwidth()}-bit"
                )
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except wave.Error as exc:
        raise UnsupportedWav(str(exc)) from exc
    ints = np.frombuffer(frames, dtype="<i2").astype(np.float64)
    return AudioBuffer(sample_rate_hz=rate, samples=ints / _PCM_SCALE)


def write_wav(buffer: AudioBuffer, path: str | Path) -> None:
    """Write PCM 16-bit mono, rounding half away from zero."""
    scaled = buffer.samples * _PCM_SCALE
    ints = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    ints = np.clip(ints, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(buffer.sample_rate_hz)
        wav.writeframes(ints.tobytes())


# ---------------------------------------------------------------------------
# Perturbation specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianNoise:
    target_snr_db: float

    kind = "noise"

    def params(self) -> dict:
        return {"target_snr_db": self.target_snr_db}


@dataclass(frozen=True)
class TimeMask:
    start_s: float
    len_s: float

    kind = "mask"

    def __post_init__(self) -> None:
        if self.start_s < 0 or self.len_s < 0:
            raise GroundingError("mask start and length must be non-negative")

    def params(self) -> dict:
        return {"start_s": self.start_s, "len_s": self.len_s}


@dataclass(frozen=True)
class Gain:
    delta_db: float

    kind = "gain"

    def params(self) -> dict:
        return {"delta_db": self.delta_db}


Transform = Union[GaussianNoise, TimeMask, Gain]

_TRANSFORMS = {"noise": GaussianNoise, "mask": TimeMask, "gain": Gain}


@dataclass(frozen=True)
class PerturbationSpec:
    transform: Transform
    sample_id: str
    salt: str

    @property
    def kind(self) -> str:
        return self.transform.kind

    @property
    def resolved_seed(self) -> int:
        return derive_seed(self.sample_id, self.salt)

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "kind": self.kind,
            "params": self.transform.params(),
            "resolved_seed": self.resolved_seed,
            "salt": self.salt,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PerturbationSpec":
        transform_cls = _TRANSFORMS.get(record.get("kind", ""))
        if transform_cls is None:
            raise GroundingError(f"unknown perturbation kind {record.get('kind')!r}")
        spec = cls(
            transform=transform_cls(**record["params"]),
            sample_id=str(record["sample_id"]),
            salt=str(record["salt"]),
        )
        logged = record.get("resolved_seed")
        if logged is not None and int(logged) != spec.resolved_seed:
            raise GroundingError(
                f"manifest seed {logged} does not match derive_seed for "
                f"({spec.sample_id!r}, {spec.salt!r})"
            )
        return spec


@dataclass(frozen=True)
class GroundingManifest:
    sample_id: str
    applied: tuple[PerturbationSpec, ...]
    lexicon_version: str = LEXICON_VERSION


# ---------------------------------------------------------------------------
# Applying perturbations
# ---------------------------------------------------------------------------


def scaled_noise(spec: PerturbationSpec, n: int, signal_power: float) -> np.ndarray:
    """The deterministic noise sequence a GaussianNoise spec adds.

    Variance is signal_power / 10^(SNR/10), the standard SNR definition
    with signal power measured over the whole clip.
    """
    if not isinstance(spec.transform, GaussianNoise):
        raise GroundingError("spec is not a GaussianNoise perturbation")
    if signal_power <= 0:
        raise SilentSignal()
    sigma = math.sqrt(signal_power / 10 ** (spec.transform.target_snr_db / 10))
    stream = gaussian_stream(spec.resolved_seed)
    return sigma * np.array(list(itertools.islice(stream, n)))


def apply_perturbation(audio: AudioBuffer, spec: PerturbationSpec) -> AudioBuffer:
    """Apply one perturbation; output saturates to [-1, 1]."""
    samples = audio.samples
    transform = spec.transform
    if isinstance(transform, GaussianNoise):
        noise = scaled_noise(spec, len(samples), audio.power())
        out = samples + noise
    elif isinstance(transform, TimeMask):
        start = round(transform.start_s * audio.sample_rate_hz)
        stop = round((transform.start_s + transform.len_s) * audio.sample_rate_hz)
        if transform.start_s < 0 or stop > len(samples):
            raise MaskOutOfRange(transform.start_s, transform.len_s, audio.duration_s)
        out = samples.copy()
        out[start:stop] = 0.0
    elif isinstance(transform, Gain):
        out = samples * 10 ** (transform.delta_db / 20)
    else:
        raise GroundingError(f"unknown transform {transform!r}")
    return AudioBuffer(audio.sample_rate_hz, np.clip(out, -1.0, 1.0))


def measure_snr_db(clean: AudioBuffer, noisy: AudioBuffer) -> float:
    """SNR implied by treating (noisy - clean) as the noise component."""
    if len(clean.samples) != len(noisy.samples):
        raise GroundingError("buffers differ in length")
    noise_power = float(np.mean((noisy.samples - clean.samples) ** 2))
    if noise_power == 0:
        raise GroundingError("buffers are identical; SNR is infinite")
    signal_power = clean.power()
    if signal_power == 0:
        raise SilentSignal()
    return 10 * math.log10(signal_power / noise_power)


# ---------------------------------------------------------------------------
# Grounding checks
# ---------------------------------------------------------------------------


def load_lexicon(path: str | Path | None = None) -> dict[str, list[str]]:
    """Load the kind -> cue-word lists; ships with versioned defaults."""
    with open(path or _DEFAULT_LEXICON_PATH, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return {kind: list(words) for kind, words in data["kinds"].items()}


def grounding_hit(
    trace: ReasoningTrace,
    manifest: GroundingManifest,
    lexicon: Mapping[str, Sequence[str]] | None = None,
) -> tuple[list[bool], float]:
    """Check whether the think-text mentions each embedded perturbation.

    A perturbation counts as hit when any lexicon word for its kind occurs
    in the think-text (case-insensitive, word-boundary). Returns the
    per-perturbation hits and the hit rate; an empty manifest is vacuously
    grounded (rate 1.0).
    """
    words = lexicon if lexicon is not None else load_lexicon()
    hits = []
    for spec in manifest.applied:
        if spec.kind not in words:
            raise MissingLexiconEntry(spec.kind)
        pattern = re.compile(
            r"\b(" + "|".join(re.escape(w) for w in words[spec.kind]) + r")\b",
            re.IGNORECASE,
        )
        hits.append(bool(pattern.search(trace.think)))
    rate = sum(hits) / len(hits) if hits else 1.0
    return hits, rate
