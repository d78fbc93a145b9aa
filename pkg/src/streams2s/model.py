"""The full speech-to-speech model: one attribute per freezable component."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .frontend import Adapter, EncoderStub
from .micro_lm import LmConfig, MicroLM, PromptTemplates, TextVocab
from .nn import Module, checkpoint
from .nn.core import generator
from .speech_decoder import DecoderConfig, Projection, SpeechDecoder
from .stream_core import RateConfig


@dataclass(frozen=True)
class ModelConfig:
    d_enc: int = 32
    d_llm: int = 64
    lm_layers: int = 2
    lm_heads: int = 2
    lm_max_len: int = 512
    text_vocab: int = 128
    codebook_size: int = 256
    d_dec: int = 48
    dec_layers: int = 2
    dec_heads: int = 2
    dec_max_len: int = 1024

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def lm(self) -> LmConfig:
        return LmConfig(self.text_vocab, self.d_llm, self.lm_layers, self.lm_heads, self.lm_max_len)

    @property
    def decoder(self) -> DecoderConfig:
        return DecoderConfig(self.text_vocab, self.codebook_size, self.d_dec, self.dec_layers, self.dec_heads,
                             self.dec_max_len)


class S2SModel(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0, rates: RateConfig = RateConfig()):
        self.cfg = cfg
        self.encoder_stub = EncoderStub(cfg.d_enc, rates)
        self.adapter = Adapter(cfg.d_enc, cfg.d_llm, generator(seed, "init", "adapter"))
        self.llm = MicroLM(cfg.lm, generator(seed, "init", "llm"))
        self.projection = Projection(cfg.d_llm, cfg.d_dec, generator(seed, "init", "projection"))
        self.speech_decoder = SpeechDecoder(cfg.decoder, generator(seed, "init", "speech_decoder"))
        self._vocab = TextVocab.default(cfg.text_vocab)
        self._prompts = PromptTemplates()

    @property
    def vocab(self) -> TextVocab:
        return self._vocab

    @property
    def prompts(self) -> PromptTemplates:
        return self._prompts

    def state(self) -> dict[str, np.ndarray]:
        return checkpoint.snapshot(self)

    def save(self, path) -> None:
        checkpoint.save(path, self.parameters())

    def load(self, path) -> None:
        checkpoint.load_into(self, checkpoint.load(path))
