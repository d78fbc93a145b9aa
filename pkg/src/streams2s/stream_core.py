"""Model-free arithmetic of the streaming design.

Rates, the hidden/speech interleave layout, the loss mask derived from it,
vocoder chunking and the analytic first-audio latency. Nothing here touches
sample data; every function is pure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Slot(enum.Enum):
    HIDDEN = "H"
    SPEECH = "S"


@dataclass(frozen=True)
class RateConfig:
    encoder_hz: float = 25.0
    adapter_hz: float = 6.25
    speech_token_hz: float = 12.5
    sample_rate: int = 16000

    def __post_init__(self):
        for name in ("encoder_hz", "adapter_hz", "speech_token_hz", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.encoder_hz != 4 * self.adapter_hz:
            raise ValueError(
                f"encoder_hz ({self.encoder_hz}) must be 4 x adapter_hz ({self.adapter_hz})"
            )
        hop = self.sample_rate / self.encoder_hz
        if hop != int(hop):
            raise ValueError(
                f"sample_rate {self.sample_rate} not divisible by encoder_hz {self.encoder_hz}"
            )

    @property
    def encoder_hop(self) -> int:
        """Waveform samples per encoder frame (640 at the defaults)."""
        return int(self.sample_rate // self.encoder_hz)

    @property
    def samples_per_token(self) -> int:
        """Waveform samples per speech token (1280 at the defaults)."""
        return int(round(self.sample_rate / self.speech_token_hz))


@dataclass(frozen=True)
class ScheduleConfig:
    m_hidden: int = 4
    n_tokens: int = 8
    chunk_tokens: int = 4

    def __post_init__(self):
        for name in ("m_hidden", "n_tokens", "chunk_tokens"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")


@dataclass(frozen=True)
class InterleaveLayout:
    slots: tuple[Slot, ...]
    h_total: int
    s_total: int

    def __len__(self) -> int:
        return len(self.slots)

    def __str__(self) -> str:
        return "".join(s.value for s in self.slots)

    def runs(self) -> list[tuple[Slot, int]]:
        """Maximal runs as (kind, length) pairs."""
        out: list[tuple[Slot, int]] = []
        for s in self.slots:
            if out and out[-1][0] is s:
                out[-1] = (s, out[-1][1] + 1)
            else:
                out.append((s, 1))
        return out


@dataclass(frozen=True)
class LatencyParams:
    cost_hidden: float
    cost_speech_token: float
    cost_chunk_synth: float

    def __post_init__(self):
        for name in ("cost_hidden", "cost_speech_token", "cost_chunk_synth"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


def interleave_layout(h_total: int, s_total: int, cfg: ScheduleConfig = ScheduleConfig()) -> InterleaveLayout:
    """Slot order for consuming ``h_total`` hidden states while emitting ``s_total`` tokens.

    Blocks of up to ``m_hidden`` hidden slots alternate with up to ``n_tokens``
    speech slots. Once hidden states run out, every remaining speech slot
    drains in one run. If speech runs out first, the leftover hidden slots
    are appended as a trailing run with nothing emitted after them.
    """
    if h_total < 0 or s_total < 0:
        raise ValueError(f"counts must be non-negative, got h={h_total}, s={s_total}")
    m, n = cfg.m_hidden, cfg.n_tokens
    slots: list[Slot] = []
    h_left, s_left = h_total, s_total
    while h_left > 0 and s_left > 0:
        take = min(m, h_left)
        slots.extend([Slot.HIDDEN] * take)
        h_left -= take
        if h_left == 0:
            break
        emit = min(n, s_left)
        slots.extend([Slot.SPEECH] * emit)
        s_left -= emit
    slots.extend([Slot.HIDDEN] * h_left)
    slots.extend([Slot.SPEECH] * s_left)
    return InterleaveLayout(tuple(slots), h_total, s_total)


def loss_mask(layout: InterleaveLayout) -> list[bool]:
    return [s is Slot.SPEECH for s in layout.slots]


def chunk_boundaries(s_total: int, chunk_tokens: int) -> list[tuple[int, int]]:
    if s_total < 0:
        raise ValueError(f"s_total must be >= 0, got {s_total}")
    if chunk_tokens < 1:
        raise ValueError(f"chunk_tokens must be >= 1, got {chunk_tokens}")
    return [(a, min(a + chunk_tokens, s_total)) for a in range(0, s_total, chunk_tokens)]


def first_audio_latency(cfg: ScheduleConfig, p: LatencyParams) -> float:
    """Seconds until the first waveform sample exists.

    The first decoder block starts after ``m_hidden`` hidden states; the
    vocoder fires as soon as it holds ``chunk_tokens`` tokens or the block
    ends, whichever comes first.
    """
    wait = min(cfg.n_tokens, cfg.chunk_tokens)
    return cfg.m_hidden * p.cost_hidden + wait * p.cost_speech_token + p.cost_chunk_synth


def conv_out_length(n: int, kernel: int = 3, stride: int = 2, pad: int = 1) -> int:
    if n <= 0:
        return 0
    return (n + 2 * pad - kernel) // stride + 1


def downsampled_length(n_frames: int) -> int:
    """Adapter output length: two k=3, s=2, p=1 convolutions, i.e. ceil(ceil(n/2)/2)."""
    if n_frames < 0:
        raise ValueError(f"n_frames must be >= 0, got {n_frames}")
    return conv_out_length(conv_out_length(n_frames))
