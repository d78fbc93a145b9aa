"""Plain SGD with freeze enforcement."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from .core import Parameter

COMPONENTS = ("encoder_stub", "adapter", "llm", "projection", "speech_decoder", "tokenizer", "vocoder")
ALWAYS_FROZEN = ("encoder_stub", "tokenizer", "vocoder")


class Mode(enum.Enum):
    FROZEN = "frozen"
    TRAINABLE = "trainable"


@dataclass(frozen=True)
class FreezeSchedule:
    modes: Mapping[str, Mode]

    def __post_init__(self):
        missing = set(COMPONENTS) - set(self.modes)
        extra = set(self.modes) - set(COMPONENTS)
        if missing or extra:
            raise ValueError(f"freeze schedule components mismatch: missing {sorted(missing)}, unknown {sorted(extra)}")
        for comp in ALWAYS_FROZEN:
            if self.modes[comp] is not Mode.FROZEN:
                raise ValueError(f"{comp} must always be FROZEN")

    @classmethod
    def trainable(cls, *components: str) -> "FreezeSchedule":
        return cls({c: Mode.TRAINABLE if c in components else Mode.FROZEN for c in COMPONENTS})

    @classmethod
    def frozen(cls) -> "FreezeSchedule":
        return cls.trainable()

    def component_trainable(self, component: str) -> bool:
        return self.modes[component] is Mode.TRAINABLE

    def allows(self, param_name: str) -> bool:
        component = param_name.split(".", 1)[0]
        if component not in self.modes:
            raise KeyError(f"parameter {param_name!r} does not belong to a known component {COMPONENTS}")
        return self.component_trainable(component)

    def to_dict(self) -> dict[str, str]:
        return {c: self.modes[c].value for c in COMPONENTS}


def optimizer_step(params: Mapping[str, Parameter], lr: float, schedule: FreezeSchedule | None = None) -> None:
    """value -= lr * grad for every trainable, unfrozen parameter; then clear all grads.

    Frozen parameters are never written to, so they stay bit-identical.
    """
    for name, p in params.items():
        if p.trainable and (schedule is None or schedule.allows(name)) and lr != 0.0:
            p.value -= lr * p.grad
        p.zero_grad()
