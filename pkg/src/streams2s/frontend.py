"""Waveform -> 25 Hz encoder frames -> 6.25 Hz adapter embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import frame_power, mel_filterbank
from .nn import Conv1d, FeedForward, Module, Parameter, SiLU, ShapeError
from .stream_core import RateConfig, conv_out_length

LOG_FLOOR = 1e-6


class SampleRateError(ValueError):
    pass


@dataclass
class FeatureFrames:
    data: np.ndarray  # (n_frames, dim)
    rate: float = 25.0

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass
class AdapterEmbeddings:
    data: np.ndarray  # (n, d_llm)
    rate: float = 6.25

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]


class EncoderStub(Module):
    """Fixed log-energy filterbank standing in for a pretrained audio encoder.

    The filterbank is stored as a (never trainable) parameter so checkpoints
    and freeze audits cover it like every other component.
    """

    def __init__(self, dim: int = 32, rates: RateConfig = RateConfig()):
        self.rates = rates
        self.hop = rates.encoder_hop
        self.filterbank = Parameter(mel_filterbank(self.hop, dim, rates.sample_rate), trainable=False)

    @property
    def dim(self) -> int:
        return self.filterbank.shape[1]

    def encode(self, waveform, sr: int) -> FeatureFrames:
        if sr != self.rates.sample_rate:
            raise SampleRateError(f"encoder expects {self.rates.sample_rate} Hz audio, got {sr} Hz")
        wav = np.asarray(waveform, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(wav)):
            raise ValueError("waveform contains non-finite samples")
        energy = frame_power(wav, self.hop) @ self.filterbank.value
        return FeatureFrames(np.log(energy + LOG_FLOOR), rate=self.rates.encoder_hz)


def encode_features(waveform, sr: int, stub: EncoderStub | None = None) -> FeatureFrames:
    return (stub or EncoderStub()).encode(waveform, sr)


class Adapter(Module):
    """Two stride-2 convolutions (k=3, p=1) then a position-wise feed-forward network."""

    def __init__(self, d_enc: int, d_llm: int, rng: np.random.Generator, ffn_mult: int = 4):
        self.conv1 = Conv1d(d_enc, d_llm, 3, 2, 1, rng)
        self.act = SiLU()
        self.conv2 = Conv1d(d_llm, d_llm, 3, 2, 1, rng)
        self.ffn = FeedForward(d_llm, ffn_mult * d_llm, d_llm, rng)
        self.d_enc, self.d_llm = d_enc, d_llm
        self._keep = self._keep_in = None

    def forward(self, x, lengths=None):
        """x: (B, T, d_enc) -> (B, ceil(ceil(T/2)/2), d_llm).

        With ``lengths`` (valid frames per row), padded input frames and
        first-stage outputs past each row's own length are zeroed, exactly as
        if that row ran unpadded.
        """
        if x.ndim != 3 or x.shape[2] != self.d_enc:
            raise ShapeError(f"Adapter: expected (batch, frames, {self.d_enc}), got {x.shape}")
        self._keep = self._keep_in = None
        if lengths is not None:
            n = np.asarray(lengths)
            self._keep_in = (np.arange(x.shape[1])[None, :] < n[:, None])[..., None]
            x = x * self._keep_in
        a = self.act.forward(self.conv1.forward(x))
        if lengths is not None:
            valid = np.array([conv_out_length(int(v)) for v in lengths])
            self._keep = (np.arange(a.shape[1])[None, :] < valid[:, None])[..., None]
            a = a * self._keep
        return self.ffn.forward(self.conv2.forward(a))

    def backward(self, dy):
        da = self.conv2.backward(self.ffn.backward(dy))
        if self._keep is not None:
            da = da * self._keep
        dx = self.conv1.backward(self.act.backward(da))
        return dx if self._keep_in is None else dx * self._keep_in


def adapter_forward(frames: FeatureFrames, adapter: Adapter) -> AdapterEmbeddings:
    if frames.dim != adapter.d_enc:
        raise ShapeError(f"adapter expects {adapter.d_enc}-wide frames, got {frames.dim}")
    out = adapter.forward(frames.data[None])[0]
    return AdapterEmbeddings(out, rate=frames.rate / 4)


def receptive_end_frame(j: int) -> int:
    """Last encoder frame that can influence adapter output j (two k=3, s=2, p=1 convs)."""
    return 2 * (2 * j + 1) + 1
