"""The five client interfaces of the data factory and their rule-based mocks.

Each client takes one request message and returns one reply message. Real
backends (an instruction-tuned LLM, a voice-cloning TTS) implement the same
``__call__`` and plug into ``ClientSuite`` unchanged. Mocks derive all
randomness from (root seed, client name, record id), so any record can be
regenerated alone, in any order, on any worker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..nn.core import generator
from ..tags import RESPONSE_EMOTIONS
from . import rules

SAMPLE_RATE = 16000
UNIT_SECONDS = 0.06


class ClientError(RuntimeError):
    """A client call failed; carries the record id and pipeline stage."""

    def __init__(self, record_id: str, stage: str, cause: Exception | str):
        super().__init__(f"{stage} failed for record {record_id}: {cause}")
        self.record_id, self.stage = record_id, stage


# ---- messages ----

@dataclass(frozen=True)
class InstructionRequest:
    record_id: str
    language: str
    kind: str


@dataclass(frozen=True)
class InstructionReply:
    text: str
    sensitivity: str
    required: str | None


@dataclass(frozen=True)
class ResponseRequest:
    record_id: str
    language: str
    instruction: str
    tags: dict
    sensitivity: str


@dataclass(frozen=True)
class ResponseReply:
    text: str


@dataclass(frozen=True)
class EmotionRequest:
    record_id: str
    instruction: str
    response: str
    tags: dict
    sensitivity: str


@dataclass(frozen=True)
class EmotionReply:
    emotion: str


@dataclass(frozen=True)
class VoiceCloneRequest:
    record_id: str
    language: str
    text: str
    prompt_audio: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class InstructedTtsRequest:
    record_id: str
    language: str
    text: str
    voice_id: str
    style: str  # an emotion (seed audio) or a response tone
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AudioReply:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE


# ---- interfaces ----

class InstructionClient(Protocol):
    def __call__(self, req: InstructionRequest) -> InstructionReply: ...


class ResponseClient(Protocol):
    def __call__(self, req: ResponseRequest) -> ResponseReply: ...


class EmotionClient(Protocol):
    def __call__(self, req: EmotionRequest) -> EmotionReply: ...


class VoiceCloneClient(Protocol):
    def __call__(self, req: VoiceCloneRequest) -> AudioReply: ...


class InstructedTtsClient(Protocol):
    def __call__(self, req: InstructedTtsRequest) -> AudioReply: ...


@dataclass
class ClientSuite:
    instruction: InstructionClient
    response: ResponseClient
    emotion: EmotionClient
    voice_clone: VoiceCloneClient
    instructed_tts: InstructedTtsClient

    @classmethod
    def mock(cls, root_seed: int = 0) -> "ClientSuite":
        return cls(
            MockInstructionClient(root_seed),
            MockResponseClient(root_seed),
            MockEmotionClient(),
            MockVoiceCloneClient(root_seed),
            MockInstructedTtsClient(root_seed),
        )


# ---- mocks ----

@dataclass
class MockInstructionClient:
    root_seed: int = 0
    kinds: tuple = ("emotion", "age", "gender", "none")

    def __call__(self, req: InstructionRequest) -> InstructionReply:
        rng = generator(self.root_seed, "instruction", req.record_id)
        kind = "none" if req.kind == "general" else self.kinds[int(rng.integers(len(self.kinds)))]
        text = _pick(rng, rules.INSTRUCTIONS[req.language][kind])
        required = None
        if kind != "none":
            values = {"emotion": rules.EMOTION_MARGINALS, "age": rules.AGE_MARGINALS,
                      "gender": rules.GENDER_MARGINALS}[kind]
            choices = list(values)
            if kind == "emotion":
                choices.remove("neutral")
            required = _pick(rng, choices)
        return InstructionReply(text, kind, required)


@dataclass
class MockResponseClient:
    root_seed: int = 0

    def __call__(self, req: ResponseRequest) -> ResponseReply:
        if not req.instruction.strip():
            raise ValueError("empty instruction text")
        rng = generator(self.root_seed, "response", req.record_id)
        tone = infer_tone(req.tags, req.sensitivity)
        return ResponseReply(_pick(rng, rules.RESPONSES[req.language][tone]))


@dataclass
class MockEmotionClient:
    def __call__(self, req: EmotionRequest) -> EmotionReply:
        return EmotionReply(infer_tone(req.tags, req.sensitivity))


def infer_tone(tags: dict, sensitivity: str) -> str:
    if sensitivity == "age" and tags["age"] in rules.AGE_TONE:
        return rules.AGE_TONE[tags["age"]]
    tone = rules.RESPONSE_TONE[tags["emotion"]]
    assert tone in RESPONSE_EMOTIONS
    return tone


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def render_voice(text: str, language: str, pitch: float, loudness: float, vibrato: float,
                 rng: np.random.Generator) -> np.ndarray:
    """One short voiced unit per word (en) or character (zh), with per-unit pitch contour."""
    units = text.split() if language == "en" else [c for c in text if not c.isspace()]
    n = int(UNIT_SECONDS * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    env = np.sin(np.pi * np.arange(n) / n) ** 2
    parts = []
    for _ in units:
        f0 = pitch * rng.uniform(0.9, 1.1)
        phase = 2 * np.pi * f0 * t
        if vibrato:
            phase = phase + 0.3 * np.sin(2 * np.pi * vibrato * t)
        tone = np.sin(phase) + 0.4 * np.sin(2 * phase) + 0.2 * np.sin(3 * phase)
        parts.append(loudness * env * tone / 1.6)
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class MockInstructedTtsClient:
    """Voice id picks a timbre; ``style`` sets prosody (pitch scale, loudness, vibrato)."""

    root_seed: int = 0

    def __call__(self, req: InstructedTtsRequest) -> AudioReply:
        rng = generator(self.root_seed, "instructed-tts", req.record_id)
        if req.tags:
            base = rules.BASE_PITCH[(req.tags["gender"], req.tags["age"])]
        else:
            base = 140.0 + generator(self.root_seed, "voice", req.voice_id).uniform(0, 80)
        prosody = rules.EMOTION_PROSODY.get(req.style) or rules.RESPONSE_PROSODY.get(req.style)
        if prosody is None:
            raise ValueError(f"unknown style {req.style!r}")
        scale, loud, vib = prosody
        return AudioReply(render_voice(req.text, req.language, base * scale, loud, vib, rng))


@dataclass
class MockVoiceCloneClient:
    """Reads pitch and loudness off the prompt audio and speaks the new text with them."""

    root_seed: int = 0

    def __call__(self, req: VoiceCloneRequest) -> AudioReply:
        prompt = np.asarray(req.prompt_audio, dtype=np.float64)
        if prompt.size < 2:
            raise ValueError("voice-clone prompt audio is empty")
        spec = np.abs(np.fft.rfft(prompt))
        spec[0] = 0.0
        pitch = float(np.argmax(spec)) * SAMPLE_RATE / len(prompt)
        loud = float(np.max(np.abs(prompt)))
        rng = generator(self.root_seed, "voice-clone", req.record_id)
        return AudioReply(render_voice(req.text, req.language, pitch, loud, 0.0, rng))
