"""Record types and the JSONL manifest format."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable

from ..tags import AGES, EMOTIONS, GENDERS, LANGUAGES, RESPONSE_EMOTIONS


class SchemaError(ValueError):
    pass


class Sensitivity(str, enum.Enum):
    EMOTION = "emotion"
    AGE = "age"
    GENDER = "gender"
    NONE = "none"


class Kind(str, enum.Enum):
    EMPATHETIC = "empathetic"
    GENERAL = "general"
    T2S = "t2s"


TAG_VALUES = {Sensitivity.EMOTION: EMOTIONS, Sensitivity.AGE: AGES, Sensitivity.GENDER: GENDERS}


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def _from_dict(cls, data: dict):
    known = [f.name for f in fields(cls)]
    unknown = set(data) - set(known)
    missing = set(known) - set(data)
    _check(not unknown, f"{cls.__name__}: unknown fields {sorted(unknown)}")
    _check(not missing, f"{cls.__name__}: missing fields {sorted(missing)}")
    return cls(**data)


@dataclass(frozen=True)
class SeedAudio:
    id: str
    language: str
    transcript: str
    emotion: str
    gender: str
    age: str
    audio: str

    def __post_init__(self):
        _check(self.language in LANGUAGES, f"seed {self.id}: unknown language {self.language!r}")
        _check(bool(self.transcript.strip()), f"seed {self.id}: empty transcript")
        _check(self.emotion in EMOTIONS, f"seed {self.id}: unknown emotion {self.emotion!r}")
        _check(self.gender in GENDERS, f"seed {self.id}: unknown gender {self.gender!r}")
        _check(self.age in AGES, f"seed {self.id}: unknown age {self.age!r}")

    def tag(self, sensitivity: Sensitivity) -> str | None:
        if sensitivity is Sensitivity.NONE:
            return None
        return getattr(self, sensitivity.value)

    @property
    def tags(self) -> dict:
        return {"emotion": self.emotion, "gender": self.gender, "age": self.age}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SeedAudio":
        return _from_dict(cls, data)


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    language: str
    text: str
    sensitivity: Sensitivity
    required: str | None
    seed_id: str | None = None
    instruction_audio: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sensitivity", Sensitivity(self.sensitivity))
        _check(self.language in LANGUAGES, f"record {self.id}: unknown language {self.language!r}")
        if self.sensitivity is Sensitivity.NONE:
            _check(self.required is None, f"record {self.id}: sensitivity none carries required={self.required!r}")
        else:
            allowed = TAG_VALUES[self.sensitivity]
            _check(self.required in allowed,
                   f"record {self.id}: required {self.sensitivity.value} {self.required!r} not in {allowed}")


@dataclass(frozen=True)
class DialogueRecord:
    id: str
    language: str
    kind: Kind
    text: str
    sensitivity: Sensitivity
    required: str | None
    seed_id: str
    query_emotion: str
    query_gender: str
    query_age: str
    response_text: str
    response_emotion: str
    response_voice: str
    response_audio: str
    instruction_audio: str | None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "sensitivity", Sensitivity(self.sensitivity))
        _check(self.response_emotion in RESPONSE_EMOTIONS,
               f"record {self.id}: unknown response emotion {self.response_emotion!r}")
        _check(self.query_emotion in EMOTIONS, f"record {self.id}: unknown query emotion {self.query_emotion!r}")
        _check(self.query_gender in GENDERS, f"record {self.id}: unknown query gender {self.query_gender!r}")
        _check(self.query_age in AGES, f"record {self.id}: unknown query age {self.query_age!r}")
        if self.kind is Kind.T2S:
            _check(self.instruction_audio is None, f"record {self.id}: T2S record carries instruction audio")
        else:
            _check(self.instruction_audio is not None, f"record {self.id}: speech record lacks instruction audio")

    @property
    def query_tags(self) -> dict:
        return {"emotion": self.query_emotion, "gender": self.query_gender, "age": self.query_age}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["sensitivity"] = self.sensitivity.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DialogueRecord":
        return _from_dict(cls, data)

    def as_t2s(self) -> "DialogueRecord":
        return replace(self, id=f"{self.id}-t2s", kind=Kind.T2S, instruction_audio=None)


def dumps_line(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True, ensure_ascii=False)


def write_jsonl(path, items: Iterable) -> None:
    text = "".join(dumps_line(x) + "\n" for x in items)
    Path(path).write_text(text, encoding="utf-8")


def read_manifest(path) -> list[DialogueRecord]:
    return _read(path, DialogueRecord)


def read_seeds(path) -> list[SeedAudio]:
    return _read(path, SeedAudio)


def _read(path, cls):
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(cls.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise SchemaError(f"{path}:{n}: {exc}") from None
        except SchemaError as exc:
            raise SchemaError(f"{path}:{n}: {exc}") from None
    return out
