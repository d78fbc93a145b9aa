"""Toy decoder-only LM taking mixed token / external-embedding input."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .nn import Embedding, Linear, Module, ShapeError, Transformer, sinusoid_table
from .tags import AGES, EMOTIONS, GENDERS

PAD, BOS, EOS, SEP = "<pad>", "<bos>", "<eos>", "<sep>"


class LengthOverflowError(ValueError):
    pass


def emotion_tag(name: str) -> str:
    return f"<emo:{name}>"


class TextVocab:
    """Reserved control and tag tokens followed by synthetic word tokens ``w000``..."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        for t in (PAD, BOS, EOS, SEP):
            if t not in self._ids:
                raise ValueError(f"vocabulary lacks reserved token {t}")

    @classmethod
    def default(cls, size: int = 128) -> "TextVocab":
        reserved = [PAD, BOS, EOS, SEP]
        reserved += [emotion_tag(e) for e in EMOTIONS]
        reserved += [f"<gender:{g}>" for g in GENDERS]
        reserved += [f"<age:{a}>" for a in AGES]
        if size <= len(reserved):
            raise ValueError(f"vocab size {size} leaves no room for words after {len(reserved)} reserved ids")
        words = [f"w{i:03d}" for i in range(size - len(reserved))]
        return cls(reserved + words)

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self._ids[token]

    @property
    def pad(self) -> int:
        return self._ids[PAD]

    @property
    def bos(self) -> int:
        return self._ids[BOS]

    @property
    def eos(self) -> int:
        return self._ids[EOS]

    @property
    def sep(self) -> int:
        return self._ids[SEP]

    def word_ids(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if not t.startswith("<")]

    def encode(self, text: str) -> list[int]:
        try:
            return [self._ids[t] for t in text.split()]
        except KeyError as exc:
            raise ValueError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids) -> str:
        return " ".join(self.tokens[int(i)] for i in ids)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TextVocab":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass(frozen=True)
class LmConfig:
    vocab_size: int = 128
    d_llm: int = 64
    layers: int = 2
    heads: int = 2
    max_len: int = 512

    def __post_init__(self):
        if self.d_llm % self.heads:
            raise ValueError(f"d_llm {self.d_llm} not divisible by heads {self.heads}")


Item = Union[int, np.ndarray]


class MixedSequence:
    """Ordered text-token ids and externally supplied d_llm-wide embeddings."""

    def __init__(self, items: Sequence[Item] = ()):
        self.items: list[Item] = list(items)

    @classmethod
    def concat(cls, *parts) -> "MixedSequence":
        items: list[Item] = []
        for part in parts:
            if isinstance(part, MixedSequence):
                items.extend(part.items)
            elif isinstance(part, np.ndarray) and part.ndim == 2:
                items.extend(row for row in part)
            else:
                items.extend(int(i) for i in part)
        return cls(items)

    def __len__(self) -> int:
        return len(self.items)

    def to_arrays(self, d: int, pad_id: int = 0):
        n = len(self.items)
        ids = np.full(n, pad_id, dtype=np.int64)
        ext = np.zeros((n, d))
        mask = np.zeros(n, dtype=bool)
        for i, item in enumerate(self.items):
            if isinstance(item, np.ndarray):
                if item.shape != (d,):
                    raise ShapeError(f"embedding at position {i}: expected width {d}, got shape {item.shape}")
                ext[i] = item
                mask[i] = True
            else:
                ids[i] = int(item)
        return ids, ext, mask


class MicroLM(Module):
    def __init__(self, cfg: LmConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.embed = Embedding(cfg.vocab_size, cfg.d_llm, rng)
        self.body = Transformer(cfg.d_llm, cfg.layers, cfg.heads, rng)
        self.head = Linear(cfg.d_llm, cfg.vocab_size, rng)
        self._pos = sinusoid_table(cfg.max_len, cfg.d_llm)
        self._ext_mask = None

    def forward(self, ids, ext=None, ext_mask=None):
        """Batched pass. ids (B, T); ext (B, T, d) used where ext_mask (B, T) is set.

        Returns (logits (B, T, V), hidden (B, T, d)) where hidden is the
        final-layer state that feeds the output head.
        """
        ids = np.asarray(ids, dtype=np.int64)
        b, t = ids.shape
        if t > self.cfg.max_len:
            raise LengthOverflowError(f"sequence length {t} exceeds max_len {self.cfg.max_len}")
        x = self.embed.forward(ids)
        if ext_mask is not None and ext_mask.any():
            x = np.where(ext_mask[..., None], ext, x)
        self._ext_mask = ext_mask
        h = self.body.forward(x + self._pos[:t])
        return self.head.forward(h), h

    def backward(self, dlogits=None, dhidden=None):
        """Returns the gradient w.r.t. the external embeddings (zero elsewhere)."""
        if dlogits is None:
            self.head._cache = None
            dh = dhidden
        else:
            dh = self.head.backward(dlogits)
            if dhidden is not None:
                dh = dh + dhidden
        dx = self.body.backward(dh)
        mask = self._ext_mask
        if mask is not None and mask.any():
            self.embed.backward(np.where(mask[..., None], 0.0, dx))
            return np.where(mask[..., None], dx, 0.0)
        self.embed.backward(dx)
        return np.zeros_like(dx)


def lm_forward(seq: MixedSequence, lm: MicroLM):
    """Single-sequence pass: (logits (T, V), hidden (T, d))."""
    if len(seq) > lm.cfg.max_len:
        raise LengthOverflowError(f"sequence length {len(seq)} exceeds max_len {lm.cfg.max_len}")
    ids, ext, mask = seq.to_arrays(lm.cfg.d_llm)
    logits, hidden = lm.forward(ids[None], ext[None], mask[None])
    return logits[0], hidden[0]


def generate_continuation(prefix: MixedSequence, max_new: int, lm: MicroLM, eos_id: int = 2) -> list[int]:
    """Greedy decoding; stops at EOS (not included) or after ``max_new`` tokens."""
    if len(prefix) + max_new > lm.cfg.max_len:
        raise LengthOverflowError(
            f"prefix {len(prefix)} + max_new {max_new} exceeds max_len {lm.cfg.max_len}"
        )
    out: list[int] = []
    seq = MixedSequence(prefix.items)
    for _ in range(max_new):
        logits, _ = lm_forward(seq, lm)
        tok = int(np.argmax(logits[-1]))
        if tok == eos_id:
            break
        out.append(tok)
        seq.items.append(tok)
    return out


def response_hidden_states(prompt: MixedSequence, response: Sequence[int], lm: MicroLM) -> np.ndarray:
    """Teacher-forced final-layer states at the response positions, (len(response), d)."""
    full = MixedSequence.concat(prompt, response)
    if len(full) > lm.cfg.max_len:
        raise LengthOverflowError(f"prompt + response length {len(full)} exceeds max_len {lm.cfg.max_len}")
    if not len(response):
        return np.zeros((0, lm.cfg.d_llm))
    _, hidden = lm_forward(full, lm)
    return hidden[len(prompt):]


@dataclass(frozen=True)
class PromptTemplates:
    """Token-level prompt layouts. ``{content}`` is the transcript or audio, ``{tag}`` the emotion tag."""

    text: tuple[str, ...] = (BOS, "{content}", SEP)
    text_with_emotion: tuple[str, ...] = (BOS, "{content}", "{tag}", SEP)
    speech: tuple[str, ...] = (BOS, "{content}", SEP)

    def render(self, template: Sequence[str], vocab: TextVocab, content, tag: str | None = None) -> MixedSequence:
        parts: list = []
        for piece in template:
            if piece == "{content}":
                parts.append(content)
            elif piece == "{tag}":
                if tag is None:
                    raise ValueError("template needs an emotion tag")
                parts.append([vocab[emotion_tag(tag)]])
            else:
                parts.append([vocab[piece]])
        return MixedSequence.concat(*parts)
