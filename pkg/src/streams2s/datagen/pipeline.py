"""Seed bank -> instructions -> seed selection -> responses -> synthesis -> manifest."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..nn.core import generator
from ..tags import AGES, EMOTIONS, GENDERS, LANGUAGES, RESPONSE_EMOTIONS
from . import rules
from .clients import (
    ClientError,
    ClientSuite,
    EmotionRequest,
    InstructedTtsRequest,
    InstructionRequest,
    ResponseRequest,
    VoiceCloneRequest,
)
from .records import (
    DialogueRecord,
    InstructionRecord,
    Kind,
    SeedAudio,
    Sensitivity,
    write_jsonl,
)
from .store import AudioStore


class NoMatchingSeedError(LookupError):
    pass


class InvalidEmotionError(ValueError):
    pass


class EmptyManifestError(ValueError):
    pass


@dataclass(frozen=True)
class TagMarginals:
    emotion: dict = field(default_factory=lambda: dict(rules.EMOTION_MARGINALS))
    age: dict = field(default_factory=lambda: dict(rules.AGE_MARGINALS))
    gender: dict = field(default_factory=lambda: dict(rules.GENDER_MARGINALS))

    def __post_init__(self):
        for name, allowed in (("emotion", EMOTIONS), ("age", AGES), ("gender", GENDERS)):
            dist = getattr(self, name)
            if set(dist) != set(allowed):
                raise ValueError(f"{name} marginals must cover exactly {allowed}, got {sorted(dist)}")
            if any(p < 0 for p in dist.values()) or abs(sum(dist.values()) - 1.0) > 1e-9:
                raise ValueError(f"{name} marginals must be non-negative and sum to 1")

    def sample(self, rng: np.random.Generator) -> dict:
        out = {}
        for name, allowed in (("emotion", EMOTIONS), ("age", AGES), ("gender", GENDERS)):
            dist = getattr(self, name)
            out[name] = allowed[int(rng.choice(len(allowed), p=[dist[v] for v in allowed]))]
        return out


def _wrap(record_id: str, stage: str, fn, *args):
    try:
        return fn(*args)
    except ClientError:
        raise
    except Exception as exc:
        raise ClientError(record_id, stage, exc) from exc


def build_seed_bank(n_per_language: int, seed: int, clients: ClientSuite | None = None,
                    store: AudioStore | None = None, marginals: TagMarginals = TagMarginals(),
                    languages: Sequence[str] = LANGUAGES) -> list[SeedAudio]:
    """Tagged seed utterances; audio rendered by the instructed-synthesis client."""
    if n_per_language < 1:
        raise ValueError(f"seed bank needs n >= 1 per language, got {n_per_language}")
    clients = clients or ClientSuite.mock(seed)
    store = store or AudioStore()
    bank = []
    for lang in languages:
        for i in range(n_per_language):
            sid = f"seed-{lang}-{i:05d}"
            rng = generator(seed, "seed-bank", sid)
            tags = marginals.sample(rng)
            transcript = rules.SEED_SENTENCES[lang][int(rng.integers(len(rules.SEED_SENTENCES[lang])))]
            req = InstructedTtsRequest(sid, lang, transcript, sid, tags["emotion"], tags)
            audio = _wrap(sid, "seed-synthesis", clients.instructed_tts, req)
            bank.append(SeedAudio(sid, lang, transcript, tags["emotion"], tags["gender"], tags["age"],
                                  store.put(audio.samples)))
    return bank


def generate_instructions(n: int, language: str, clients: ClientSuite, kind: Kind = Kind.EMPATHETIC,
                          start: int = 0) -> list[InstructionRecord]:
    kind = Kind(kind)
    if language not in LANGUAGES:
        raise ValueError(f"unknown language {language!r}")
    out = []
    for i in range(start, start + n):
        rid = f"{language}-{kind.value[:3]}-{i:06d}"
        reply = _wrap(rid, "instruction", clients.instruction, InstructionRequest(rid, language, kind.value))
        out.append(_wrap(rid, "instruction", InstructionRecord, rid, language, reply.text,
                         Sensitivity(reply.sensitivity), reply.required))
    return out


class SeedIndex:
    """Seeds grouped by (language, sensitivity, tag value) for constrained draws."""

    def __init__(self, bank: Sequence[SeedAudio]):
        self.bank = list(bank)
        self.groups: dict[tuple, list[SeedAudio]] = {}
        for s in self.bank:
            self.groups.setdefault((s.language, Sensitivity.NONE, None), []).append(s)
            for sens in (Sensitivity.EMOTION, Sensitivity.AGE, Sensitivity.GENDER):
                self.groups.setdefault((s.language, sens, s.tag(sens)), []).append(s)
        self.by_id = {s.id: s for s in self.bank}

    def matching(self, language: str, sensitivity: Sensitivity, value) -> list[SeedAudio]:
        return self.groups.get((language, Sensitivity(sensitivity), value), [])


def select_seed(rec: InstructionRecord, bank, seed: int) -> SeedAudio:
    """Uniform draw among seeds of the record's language carrying its required tag."""
    index = bank if isinstance(bank, SeedIndex) else SeedIndex(bank)
    pool = index.matching(rec.language, rec.sensitivity, rec.required)
    if not pool:
        raise NoMatchingSeedError(
            f"record {rec.id}: no {rec.language} seed with {rec.sensitivity.value}={rec.required!r}"
        )
    return pool[int(generator(seed, "select-seed", rec.id).integers(len(pool)))]


def generate_response(rec: InstructionRecord, seed_audio: SeedAudio, clients: ClientSuite) -> tuple[str, str]:
    if not rec.text.strip():
        raise ValueError(f"record {rec.id}: empty instruction text")
    tags = seed_audio.tags
    reply = _wrap(rec.id, "response", clients.response,
                  ResponseRequest(rec.id, rec.language, rec.text, tags, rec.sensitivity.value))
    emo = _wrap(rec.id, "emotion-inference", clients.emotion,
                EmotionRequest(rec.id, rec.text, reply.text, tags, rec.sensitivity.value))
    if emo.emotion not in RESPONSE_EMOTIONS:
        raise InvalidEmotionError(f"record {rec.id}: emotion client returned {emo.emotion!r}, not in {RESPONSE_EMOTIONS}")
    return reply.text, emo.emotion


def synthesize_record(rec: InstructionRecord, seed_audio: SeedAudio, response: tuple[str, str],
                      clients: ClientSuite, store: AudioStore, kind: Kind = Kind.EMPATHETIC,
                      prompt_audio: np.ndarray | None = None) -> DialogueRecord:
    """Instruction audio cloned from the seed voice; response audio from the one reference voice."""
    kind = Kind(kind)
    text, emotion = response
    instruction_ref = None
    if kind is not Kind.T2S:
        prompt = prompt_audio if prompt_audio is not None else store.get(seed_audio.audio)
        audio = _wrap(rec.id, "voice-clone", clients.voice_clone,
                      VoiceCloneRequest(rec.id, rec.language, rec.text, prompt))
        instruction_ref = store.put(audio.samples)
    reply = _wrap(rec.id, "response-synthesis", clients.instructed_tts,
                  InstructedTtsRequest(rec.id, rec.language, text, rules.RESPONSE_VOICE_ID, emotion))
    return DialogueRecord(
        rec.id, rec.language, kind, rec.text, rec.sensitivity, rec.required, seed_audio.id,
        seed_audio.emotion, seed_audio.gender, seed_audio.age, text, emotion, rules.RESPONSE_VOICE_ID,
        store.put(reply.samples), instruction_ref,
    )


def derive_t2s(records: Sequence[DialogueRecord], fraction: float, seed: int) -> list[DialogueRecord]:
    """Seeded subsample of speech records, relabeled T2S with instruction audio dropped."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    pool = [r for r in records if r.kind is not Kind.T2S]
    k = int(round(fraction * len(pool)))
    chosen = np.sort(generator(seed, "derive-t2s").choice(len(pool), size=k, replace=False))
    return [pool[i].as_t2s() for i in chosen]


@dataclass
class Histogram:
    counts: dict
    total: int

    @property
    def fractions(self) -> dict:
        return {k: v / self.total for k, v in self.counts.items()}

    def to_dict(self) -> dict:
        return {"total": self.total, "counts": self.counts, "fractions": self.fractions}


@dataclass
class ManifestStats:
    query_emotion: Histogram
    query_age: Histogram
    query_gender: Histogram
    response_emotion: Histogram

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_dict() for k in ("query_emotion", "query_age", "query_gender",
                                                        "response_emotion")}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _histogram(values, categories) -> Histogram:
    counts = {c: 0 for c in categories}
    for v in values:
        counts[v] += 1
    return Histogram(counts, len(values))


def manifest_stats(records: Sequence[DialogueRecord]) -> ManifestStats:
    if not records:
        raise EmptyManifestError("manifest is empty; nothing to summarise")
    return ManifestStats(
        _histogram([r.query_emotion for r in records], EMOTIONS),
        _histogram([r.query_age for r in records], AGES),
        _histogram([r.query_gender for r in records], GENDERS),
        _histogram([r.response_emotion for r in records], RESPONSE_EMOTIONS),
    )


@dataclass(frozen=True)
class DatagenConfig:
    n: int = 100  # speech-input records, split evenly over languages and speech kinds
    seed: int = 0
    languages: tuple = LANGUAGES
    kinds: tuple = ("empathetic", "general", "t2s")
    seeds_per_language: int = 200
    t2s_fraction: float = 0.5
    workers: int = 1
    marginals: TagMarginals = field(default_factory=TagMarginals)


@dataclass
class DatagenResult:
    seeds: list
    records: list
    stats: ManifestStats | None


def run_datagen(cfg: DatagenConfig, out_dir, clients: ClientSuite | None = None) -> DatagenResult:
    """Full factory run. Writes seeds.jsonl, manifest.jsonl, stats.json and audio/ under ``out_dir``."""
    kinds = [Kind(k) for k in cfg.kinds]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clients = clients or ClientSuite.mock(cfg.seed)
    store = AudioStore(out)
    bank = build_seed_bank(cfg.seeds_per_language, cfg.seed, clients, store, cfg.marginals, cfg.languages)
    index = SeedIndex(bank)
    prompts: dict[str, np.ndarray] = {}

    def process(item):
        rec, kind = item
        chosen = _wrap(rec.id, "select-seed", select_seed, rec, index, cfg.seed)
        response = generate_response(rec, chosen, clients)
        if chosen.id not in prompts:
            prompts[chosen.id] = store.get(chosen.audio)
        return synthesize_record(rec, chosen, response, clients, store, kind, prompts[chosen.id])

    groups = [(lang, kind) for kind in (Kind.EMPATHETIC, Kind.GENERAL) if kind in kinds for lang in cfg.languages]
    work = []
    for g, (lang, kind) in enumerate(groups):
        count = cfg.n // len(groups) + (1 if g < cfg.n % len(groups) else 0)
        work += [(r, kind) for r in generate_instructions(count, lang, clients, kind)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(process, work))
    else:
        records = [process(w) for w in work]
    if Kind.T2S in kinds and records:
        source = [r for r in records if r.kind is Kind.GENERAL] or records
        records += derive_t2s(source, cfg.t2s_fraction, cfg.seed)
    write_jsonl(out / "seeds.jsonl", bank)
    write_jsonl(out / "manifest.jsonl", records)
    stats = manifest_stats(records) if records else None
    if stats is not None:
        (out / "stats.json").write_text(stats.to_json() + "\n", encoding="utf-8")
    return DatagenResult(bank, records, stats)
