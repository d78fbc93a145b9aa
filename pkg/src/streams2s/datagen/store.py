"""Content-addressed WAV store: ``audio/<first two hex>/<sha256>.wav``."""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path

import numpy as np

from ..audio import read_wav, wav_bytes


class AudioStore:
    """Writes each distinct waveform once. ``root=None`` only computes addresses."""

    def __init__(self, root=None, sample_rate: int = 16000):
        self.root = Path(root) if root is not None else None
        self.sample_rate = sample_rate
        self._lock = threading.Lock()

    def put(self, samples: np.ndarray) -> str:
        data = wav_bytes(samples, self.sample_rate)
        digest = hashlib.sha256(data).hexdigest()
        ref = f"audio/{digest[:2]}/{digest}.wav"
        if self.root is not None:
            path = self.root / ref
            with self._lock:
                if not path.exists():
                    path.parent.mkdir(parents=True, exist_ok=True)
                    tmp = path.with_suffix(".tmp")
                    tmp.write_bytes(data)
                    tmp.replace(path)
        return ref

    def get(self, ref: str) -> np.ndarray:
        if self.root is None:
            raise FileNotFoundError(f"address-only store cannot read {ref}")
        return read_wav(self.root / ref, self.sample_rate)
