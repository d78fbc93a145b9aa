"""Discrete-event simulation of the LLM -> speech decoder -> vocoder pipeline.

Three servers run concurrently: the LLM emits hidden states one after
another, the decoder walks the interleave layout (hidden slots are consumed
for free once available, each speech slot costs one token step), and the
vocoder synthesizes a chunk once it holds ``chunk_tokens`` tokens or the
decoder's current speech run ends.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from .stream_core import LatencyParams, ScheduleConfig, Slot, interleave_layout


@dataclass
class ChunkEvent:
    token_span: tuple[int, int]
    ready_at: float
    synth_start: float
    synth_done: float


@dataclass
class PipelineTrace:
    hidden_ready: list[float] = field(default_factory=list)
    token_done: list[float] = field(default_factory=list)
    chunks: list[ChunkEvent] = field(default_factory=list)

    @property
    def first_audio(self) -> float | None:
        return self.chunks[0].synth_done if self.chunks else None

    def cadence(self) -> list[float]:
        """Gaps between consecutive chunk completions."""
        done = [c.synth_done for c in self.chunks]
        return [b - a for a, b in zip(done, done[1:])]


def simulate_pipeline(h_total: int, s_total: int, cfg: ScheduleConfig, p: LatencyParams) -> PipelineTrace:
    layout = interleave_layout(h_total, s_total, cfg).slots
    trace = PipelineTrace()
    seq = itertools.count()
    events: list[tuple[float, int, str, int]] = []

    t = 0.0
    for i in range(h_total):
        t += p.cost_hidden
        heapq.heappush(events, (t, next(seq), "hidden", i))

    hidden_avail = 0
    hidden_used = 0
    slot = 0
    decoder_busy = False
    tokens_done = 0
    buffer_start = 0
    pending: list[tuple[tuple[int, int], float]] = []
    vocoder_busy = False

    def advance_decoder(now: float) -> None:
        nonlocal slot, decoder_busy, hidden_used
        while not decoder_busy and slot < len(layout):
            if layout[slot] is Slot.HIDDEN:
                if hidden_used >= hidden_avail:
                    return
                hidden_used += 1
                slot += 1
            else:
                decoder_busy = True
                heapq.heappush(events, (now + p.cost_speech_token, next(seq), "token", slot))

    def start_vocoder(now: float) -> None:
        nonlocal vocoder_busy
        if vocoder_busy or not pending:
            return
        span, ready = pending.pop(0)
        start = max(now, ready)
        vocoder_busy = True
        trace.chunks.append(ChunkEvent(span, ready, start, start + p.cost_chunk_synth))
        heapq.heappush(events, (start + p.cost_chunk_synth, next(seq), "synth", len(trace.chunks) - 1))

    advance_decoder(0.0)
    while events:
        now, _, kind, idx = heapq.heappop(events)
        if kind == "hidden":
            trace.hidden_ready.append(now)
            hidden_avail += 1
            advance_decoder(now)
        elif kind == "token":
            trace.token_done.append(now)
            tokens_done += 1
            decoder_busy = False
            slot += 1
            run_ended = slot >= len(layout) or layout[slot] is not Slot.SPEECH
            if tokens_done - buffer_start == cfg.chunk_tokens or run_ended:
                pending.append(((buffer_start, tokens_done), now))
                buffer_start = tokens_done
                start_vocoder(now)
            advance_decoder(now)
        else:
            vocoder_busy = False
            start_vocoder(now)
    return trace


def simulated_first_audio(cfg: ScheduleConfig, p: LatencyParams) -> float:
    """First waveform completion time for a stream long enough to fill one block."""
    h = 2 * cfg.m_hidden
    s = 2 * cfg.n_tokens + cfg.chunk_tokens
    first = simulate_pipeline(h, s, cfg, p).first_audio
    assert first is not None
    return first
