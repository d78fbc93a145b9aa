"""Discrete speech tokens at 12.5/s from a k-means codebook over pooled mel frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .audio import mel_frames
from .nn import checkpoint
from .nn.core import generator

POOL = 8  # 100 mel frames/s -> 12.5 tokens/s
KMEANS_ITERS = 25


class InsufficientDataError(ValueError):
    pass


class TokenRangeError(IndexError):
    pass


@dataclass(frozen=True)
class Codebook:
    vectors: np.ndarray  # (V, dim)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError(f"codebook must be a non-empty (V, dim) array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("codebook contains non-finite values")
        if len(np.unique(v, axis=0)) != len(v):
            raise ValueError("codebook contains duplicate code vectors")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def save(self, path) -> None:
        checkpoint.save(path, {"codebook.vectors": self.vectors})

    @classmethod
    def load(cls, path) -> "Codebook":
        arrays = checkpoint.load(path)
        if set(arrays) != {"codebook.vectors"}:
            raise checkpoint.CheckpointError(f"not a codebook file: records {sorted(arrays)}")
        return cls(arrays["codebook.vectors"])


@dataclass
class SpeechTokenSequence:
    ids: list[int] = field(default_factory=list)
    rate: float = 12.5

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def duration_s(self) -> float:
        return len(self.ids) / self.rate


def pool_features(mel: np.ndarray, factor: int = POOL) -> np.ndarray:
    """Mean over non-overlapping windows of ``factor`` frames; the last window may be short."""
    mel = np.asarray(mel, dtype=np.float64)
    n = mel.shape[0]
    n_out = -(-n // factor)
    out = np.empty((n_out, mel.shape[1]))
    full = n // factor
    if full:
        out[:full] = mel[: full * factor].reshape(full, factor, -1).mean(axis=1)
    if n_out > full:
        out[full] = mel[full * factor:].mean(axis=0)
    return out


def _reseed_empty(x, centroids, ids, empty):
    """Move empty centroids onto the points farthest from their current code."""
    d2 = ((x - centroids[ids]) ** 2).sum(axis=1)
    order = np.argsort(-d2, kind="stable")
    taken = {tuple(c) for c in centroids}
    pick = iter(order)
    for j in empty:
        for i in pick:
            key = tuple(x[i])
            if key not in taken:
                centroids[j] = x[i]
                taken.add(key)
                break


def build_codebook(features: np.ndarray, size: int, seed: int, iters: int = KMEANS_ITERS) -> Codebook:
    """Seeded k-means with a fixed iteration count."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be (n, dim), got shape {x.shape}")
    if len(x) < size:
        raise InsufficientDataError(f"{len(x)} feature rows cannot seed {size} codes")
    distinct = np.unique(x, axis=0)
    if len(distinct) < size:
        raise InsufficientDataError(f"only {len(distinct)} distinct feature rows for {size} codes")
    rng = generator(seed, "codebook-init")
    centroids = distinct[np.sort(rng.choice(len(distinct), size=size, replace=False))].copy()
    for _ in range(iters):
        ids = _kernels.nearest_code(x, centroids)
        sums, counts = _kernels.centroid_sums(x, ids, size)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if len(empty):
            _reseed_empty(x, centroids, ids, empty)
    return Codebook(centroids)


def quantize(features: np.ndarray, book: Codebook) -> SpeechTokenSequence:
    """Nearest code by squared Euclidean distance; ties go to the lowest index."""
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != book.dim:
        raise ValueError(f"feature width {x.shape[-1] if x.ndim else None} does not match codebook dim {book.dim}")
    if len(x) == 0:
        return SpeechTokenSequence([])
    return SpeechTokenSequence([int(i) for i in _kernels.nearest_code(x, book.vectors)])


def dequantize(tokens, book: Codebook) -> np.ndarray:
    ids = np.asarray(tokens.ids if isinstance(tokens, SpeechTokenSequence) else tokens, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= book.size):
        bad = int(ids[(ids < 0) | (ids >= book.size)][0])
        raise TokenRangeError(f"speech token {bad} outside codebook range [0, {book.size})")
    return book.vectors[ids].copy() if ids.size else np.zeros((0, book.dim))


def tokenize_waveform(waveform: np.ndarray, book: Codebook) -> SpeechTokenSequence:
    return quantize(pool_features(mel_frames(waveform)), book)
