"""16-bit PCM WAV I/O and the fixed filterbanks used by the encoder stub and the tokenizer."""

from __future__ import annotations

import io
import wave
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000


class WavFormatError(ValueError):
    pass


def wav_bytes(samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> bytes:
    """Encode float samples in [-1, 1] as mono 16-bit little-endian PCM."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    Path(path).write_bytes(wav_bytes(samples, sample_rate))


def read_wav(path_or_bytes, expected_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read mono 16-bit PCM at ``expected_rate``; anything else is rejected."""
    src = io.BytesIO(path_or_bytes) if isinstance(path_or_bytes, (bytes, bytearray)) else str(path_or_bytes)
    try:
        with wave.open(src, "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if w.getcomptype() != "NONE":
                raise WavFormatError(f"compressed WAV ({w.getcomptype()}) is not supported; need 16-bit PCM")
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"unsupported or malformed WAV: {exc}; need mono 16-bit PCM at {expected_rate} Hz") from None
    except EOFError:
        raise WavFormatError("truncated WAV header") from None
    if channels != 1:
        raise WavFormatError(f"WAV has {channels} channels; need mono")
    if width != 2:
        raise WavFormatError(f"WAV sample width is {8 * width} bits; need 16-bit PCM")
    if rate != expected_rate:
        raise WavFormatError(f"WAV sample rate is {rate} Hz; need {expected_rate} Hz")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def band_centers(n_bands: int, f_min: float = 80.0, f_max: float = 7600.0) -> np.ndarray:
    pts = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_bands + 2))
    return pts[1:-1]


def mel_filterbank(n_fft: int, n_bands: int, sample_rate: int = SAMPLE_RATE,
                   f_min: float = 80.0, f_max: float = 7600.0) -> np.ndarray:
    """Triangular filters on an HTK mel axis, shape (n_fft // 2 + 1, n_bands)."""
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    pts = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_bands + 2))
    fb = np.zeros((len(freqs), n_bands))
    for b in range(n_bands):
        lo, mid, hi = pts[b], pts[b + 1], pts[b + 2]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        fb[:, b] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


def frame_power(waveform: np.ndarray, hop: int) -> np.ndarray:
    """Power spectrum of consecutive non-overlapping ``hop``-sample frames.

    Frame t covers samples [t*hop, (t+1)*hop); a trailing partial frame is dropped.
    """
    n = len(waveform) // hop
    if n == 0:
        return np.zeros((0, hop // 2 + 1))
    frames = np.asarray(waveform[: n * hop], dtype=np.float64).reshape(n, hop)
    return np.abs(np.fft.rfft(frames, axis=1)) ** 2


MEL_HOP = 160
MEL_BANDS = 20


def mel_frames(waveform: np.ndarray, hop: int = MEL_HOP, n_bands: int = MEL_BANDS) -> np.ndarray:
    """log1p band energies at 100 frames/s (hop 160 at 16 kHz); non-negative, zero for silence."""
    fb = mel_filterbank(hop, n_bands)
    return np.log1p(frame_power(waveform, hop) @ fb)
