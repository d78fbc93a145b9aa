"""Chunk-aware causal token -> waveform synthesis.

Each token is dequantized to a mel frame whose band energies drive a bank
of sinusoidal oscillators, one per mel band. Oscillator phases and the last
amplitudes live in ``VocoderState``, and every token is rendered by the same
per-token computation, so splitting a token stream into chunks never changes
a single output sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .audio import MEL_HOP, band_centers
from .stream_core import RateConfig, chunk_boundaries
from .tokenizer import Codebook, SpeechTokenSequence, dequantize

RAMP_SAMPLES = 64


@dataclass
class VocoderState:
    phases: np.ndarray
    last_amp: np.ndarray
    samples_emitted: int = 0
    tokens_consumed: int = 0

    @classmethod
    def initial(cls, n_bands: int) -> "VocoderState":
        return cls(np.zeros(n_bands), np.zeros(n_bands))


@dataclass
class WaveChunk:
    samples: np.ndarray
    token_span: tuple[int, int]


@dataclass
class Vocoder:
    book: Codebook
    rates: RateConfig = field(default_factory=RateConfig)

    def __post_init__(self):
        freqs = band_centers(self.book.dim, f_max=min(7600.0, 0.475 * self.rates.sample_rate))
        self.increments = 2.0 * np.pi * freqs / self.rates.sample_rate

    def initial_state(self) -> VocoderState:
        return VocoderState.initial(self.book.dim)

    def amplitudes(self, mel: np.ndarray) -> np.ndarray:
        """Invert log1p band energy to a per-band sinusoid amplitude; zero energy is silence."""
        return 2.0 * np.sqrt(np.expm1(np.maximum(mel, 0.0))) / MEL_HOP

    def synth_chunk(self, tokens, state: VocoderState) -> tuple[WaveChunk, VocoderState]:
        ids = list(tokens.ids if isinstance(tokens, SpeechTokenSequence) else tokens)
        if not ids:
            raise ValueError("synth_chunk needs at least one token")
        amps = self.amplitudes(dequantize(ids, self.book))
        hop = self.rates.samples_per_token
        samples, last, phases = _kernels.oscillator_bank(
            amps, state.last_amp, state.phases, self.increments, hop, float(RAMP_SAMPLES)
        )
        start = state.tokens_consumed
        new_state = VocoderState(phases, last, state.samples_emitted + len(samples), start + len(ids))
        return WaveChunk(samples, (start, start + len(ids))), new_state


def synth_chunk(tokens, book: Codebook, state: VocoderState | None = None, rates: RateConfig = RateConfig()):
    voc = Vocoder(book, rates)
    return voc.synth_chunk(tokens, state if state is not None else voc.initial_state())


def synth_stream(tokens, chunk_tokens: int, book: Codebook, rates: RateConfig = RateConfig()) -> np.ndarray:
    ids = list(tokens.ids if isinstance(tokens, SpeechTokenSequence) else tokens)
    voc = Vocoder(book, rates)
    state = voc.initial_state()
    parts = []
    for a, b in chunk_boundaries(len(ids), chunk_tokens):
        chunk, state = voc.synth_chunk(ids[a:b], state)
        parts.append(chunk.samples)
    return np.concatenate(parts) if parts else np.zeros(0)
