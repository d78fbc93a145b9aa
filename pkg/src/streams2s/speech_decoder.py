"""Decoder-only speech-token generator conditioned on projected LLM hidden states.

Vocabulary layout: text ids [0, T), speech ids [T, T+V), then EOS_SP, BOS_SP
and PAD_SP. Speech emission only ever scores the contiguous range
[T, T+V] (speech ids plus EOS_SP); all other logits are treated as -inf.

Slot convention shared by training and decoding: a HIDDEN slot's input is
the projected hidden state; the k-th SPEECH slot's input is BOS_SP for k=0
and the previous speech token otherwise, and its output predicts token k
(EOS_SP after the last one).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .micro_lm import LengthOverflowError
from .nn import Embedding, Linear, Module, ShapeError, SoftmaxCrossEntropy, Transformer, sinusoid_table
from .stream_core import ScheduleConfig, Slot, interleave_layout
from .tokenizer import SpeechTokenSequence


@dataclass(frozen=True)
class DecoderConfig:
    text_vocab: int = 128
    codebook_size: int = 256
    d_dec: int = 48
    layers: int = 2
    heads: int = 2
    max_len: int = 1024

    def __post_init__(self):
        if self.d_dec % self.heads:
            raise ValueError(f"d_dec {self.d_dec} not divisible by heads {self.heads}")

    @property
    def speech_offset(self) -> int:
        return self.text_vocab

    @property
    def eos_sp(self) -> int:
        return self.text_vocab + self.codebook_size

    @property
    def bos_sp(self) -> int:
        return self.eos_sp + 1

    @property
    def pad_sp(self) -> int:
        return self.eos_sp + 2

    @property
    def vocab_size(self) -> int:
        return self.eos_sp + 3

    @property
    def speech_slice(self) -> slice:
        """Logit columns allowed during speech emission: speech ids then EOS_SP."""
        return slice(self.text_vocab, self.eos_sp + 1)

    def to_speech_id(self, dec_id: int) -> int:
        return dec_id - self.text_vocab


class Projection(Module):
    """LLM width -> decoder width."""

    def __init__(self, d_llm: int, d_dec: int, rng: np.random.Generator):
        self.linear = Linear(d_llm, d_dec, rng)

    def forward(self, h):
        return self.linear.forward(h)

    def backward(self, dy):
        return self.linear.backward(dy)


class SpeechDecoder(Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.embed = Embedding(cfg.vocab_size, cfg.d_dec, rng)
        self.body = Transformer(cfg.d_dec, cfg.layers, cfg.heads, rng)
        self.head = Linear(cfg.d_dec, cfg.vocab_size, rng)
        self._pos = sinusoid_table(cfg.max_len, cfg.d_dec)
        self._ext_mask = None

    def forward(self, ids, ext=None, ext_mask=None):
        """ids (B, L); ext (B, L, d_dec) replaces the token embedding where ext_mask is set."""
        ids = np.asarray(ids, dtype=np.int64)
        b, t = ids.shape
        if t > self.cfg.max_len:
            raise LengthOverflowError(f"decoder sequence length {t} exceeds max_len {self.cfg.max_len}")
        x = self.embed.forward(ids)
        if ext_mask is not None and ext_mask.any():
            x = np.where(ext_mask[..., None], ext, x)
        self._ext_mask = ext_mask
        return self.head.forward(self.body.forward(x + self._pos[:t]))

    def backward(self, dlogits):
        dx = self.body.backward(self.head.backward(dlogits))
        mask = self._ext_mask
        if mask is not None and mask.any():
            self.embed.backward(np.where(mask[..., None], 0.0, dx))
            return np.where(mask[..., None], dx, 0.0)
        self.embed.backward(dx)
        return np.zeros_like(dx)


@dataclass
class DecoderSequence:
    """One training example laid out slot by slot.

    ``hidden`` rows are raw LLM states (width d_llm) at HIDDEN slots and
    zero elsewhere; the projection is applied at train time so it receives
    gradients. ``targets`` are decoder-vocab ids, meaningful only where
    ``loss_mask`` is set.
    """

    slots: tuple
    input_ids: np.ndarray
    hidden: np.ndarray
    hidden_mask: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.input_ids)

    def input_embeddings(self, decoder: SpeechDecoder, proj: Projection) -> np.ndarray:
        emb = decoder.embed.table.value[self.input_ids]
        if self.hidden_mask.any():
            emb = np.where(self.hidden_mask[:, None], proj.forward(self.hidden), emb)
        return emb


def _speech_inputs_and_targets(speech_ids: Sequence[int], cfg: DecoderConfig):
    dec = [cfg.speech_offset + int(s) for s in speech_ids]
    for s in speech_ids:
        if not 0 <= int(s) < cfg.codebook_size:
            raise ShapeError(f"speech token {s} outside [0, {cfg.codebook_size})")
    return [cfg.bos_sp] + dec, dec + [cfg.eos_sp]


def build_training_sequence(hidden: np.ndarray, speech, sched: ScheduleConfig, cfg: DecoderConfig) -> DecoderSequence:
    """Interleave hidden states with speech tokens (+ EOS_SP) per the M:N layout."""
    speech_ids = list(speech.ids if isinstance(speech, SpeechTokenSequence) else speech)
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 2:
        raise ShapeError(f"hidden must be (h, d_llm), got shape {hidden.shape}")
    layout = interleave_layout(len(hidden), len(speech_ids) + 1, sched)
    ins, tgts = _speech_inputs_and_targets(speech_ids, cfg)
    n = len(layout)
    input_ids = np.full(n, cfg.pad_sp, dtype=np.int64)
    targets = np.full(n, cfg.pad_sp, dtype=np.int64)
    rows = np.zeros((n, hidden.shape[1]))
    hmask = np.zeros(n, dtype=bool)
    lmask = np.zeros(n, dtype=bool)
    hi = si = 0
    for pos, slot in enumerate(layout.slots):
        if slot is Slot.HIDDEN:
            rows[pos] = hidden[hi]
            hmask[pos] = True
            hi += 1
        else:
            input_ids[pos] = ins[si]
            targets[pos] = tgts[si]
            lmask[pos] = True
            si += 1
    return DecoderSequence(layout.slots, input_ids, rows, hmask, targets, lmask)


def build_tts_sequence(text_ids: Sequence[int], speech, cfg: DecoderConfig, d_llm: int = 1) -> DecoderSequence:
    """Offline TTS layout: text tokens embedded as a prefix, then speech tokens + EOS_SP."""
    speech_ids = list(speech.ids if isinstance(speech, SpeechTokenSequence) else speech)
    for t in text_ids:
        if not 0 <= int(t) < cfg.text_vocab:
            raise ShapeError(f"text token {t} outside [0, {cfg.text_vocab})")
    ins, tgts = _speech_inputs_and_targets(speech_ids, cfg)
    p = len(text_ids)
    n = p + len(ins)
    input_ids = np.array(list(text_ids) + ins, dtype=np.int64)
    targets = np.array([cfg.pad_sp] * p + tgts, dtype=np.int64)
    lmask = np.array([False] * p + [True] * len(ins))
    slots = (None,) * p + (Slot.SPEECH,) * len(ins)
    return DecoderSequence(slots, input_ids, np.zeros((n, d_llm)), np.zeros(n, dtype=bool), targets, lmask)


@dataclass
class DecoderBatch:
    input_ids: np.ndarray  # (B, L)
    hidden: np.ndarray  # (B, L, d_llm)
    hidden_mask: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray


def collate(seqs: Sequence[DecoderSequence], cfg: DecoderConfig) -> DecoderBatch:
    """Right-pad to a common length; causality keeps padding invisible to real slots."""
    length = max(len(s) for s in seqs)
    d = seqs[0].hidden.shape[1]
    b = len(seqs)
    out = DecoderBatch(
        np.full((b, length), cfg.pad_sp, dtype=np.int64),
        np.zeros((b, length, d)),
        np.zeros((b, length), dtype=bool),
        np.full((b, length), cfg.pad_sp, dtype=np.int64),
        np.zeros((b, length), dtype=bool),
    )
    for i, s in enumerate(seqs):
        n = len(s)
        out.input_ids[i, :n] = s.input_ids
        out.hidden[i, :n] = s.hidden
        out.hidden_mask[i, :n] = s.hidden_mask
        out.targets[i, :n] = s.targets
        out.loss_mask[i, :n] = s.loss_mask
    return out


def speech_loss(decoder: SpeechDecoder, proj: Projection | None, batch: DecoderBatch, grad: bool = False,
                hidden_override: np.ndarray | None = None, weight: float = 1.0):
    """Mean CE over speech slots, scored on the speech+EOS logit range.

    Returns (loss, correct, count, d_hidden) where d_hidden is the gradient
    w.r.t. the raw hidden rows (None unless ``grad``). ``weight`` scales the
    backward pass only.
    """
    cfg = decoder.cfg
    hidden = batch.hidden if hidden_override is None else hidden_override
    ext = proj.forward(hidden) if proj is not None and batch.hidden_mask.any() else None
    logits = decoder.forward(batch.input_ids, ext, batch.hidden_mask if ext is not None else None)
    sl = cfg.speech_slice
    ce = SoftmaxCrossEntropy()
    tgt = np.where(batch.loss_mask, batch.targets - cfg.speech_offset, 0)
    loss = ce.forward(logits[..., sl], tgt, batch.loss_mask)
    pred = np.argmax(logits[..., sl], axis=-1)
    correct = int((pred == tgt)[batch.loss_mask].sum())
    count = int(batch.loss_mask.sum())
    d_hidden = None
    if grad:
        dsl = ce.backward(weight).reshape(logits[..., sl].shape)
        dlogits = np.zeros_like(logits)
        dlogits[..., sl] = dsl
        dext = decoder.backward(dlogits)
        if ext is not None:
            d_hidden = proj.backward(dext)
    return loss, correct, count, d_hidden


class DecoderSession:
    """KV-cached incremental decoding; one slot per call."""

    def __init__(self, decoder: SpeechDecoder, proj: Projection):
        self.decoder, self.proj = decoder, proj
        self.cfg = decoder.cfg
        self.caches = decoder.body.new_cache()
        self.position = 0
        self.prev = self.cfg.bos_sp

    def _advance(self, x):
        if self.position >= self.cfg.max_len:
            raise LengthOverflowError(f"decoder exceeded max_len {self.cfg.max_len} slots")
        h = self.decoder.body.step(x + self.decoder._pos[self.position], self.caches)
        self.position += 1
        return h

    def feed_hidden(self, vector: np.ndarray) -> None:
        self._advance(self.proj.forward(np.asarray(vector, dtype=np.float64)))

    def next_token(self) -> int:
        """Greedy decoder-vocab id from the speech+EOS range."""
        h = self._advance(self.decoder.embed.table.value[self.prev])
        logits = h @ self.decoder.head.weight.value + self.decoder.head.bias.value
        tok = self.cfg.speech_offset + int(np.argmax(logits[self.cfg.speech_slice]))
        self.prev = tok
        return tok


class Phase(enum.Enum):
    INTERLEAVING = "interleaving"
    DRAINING = "draining"
    DONE = "done"


class StreamError(RuntimeError):
    pass


@dataclass
class PushHidden:
    vector: np.ndarray


@dataclass
class FinishHidden:
    pass


@dataclass
class StreamState:
    session: DecoderSession
    sched: ScheduleConfig
    max_tokens: int
    consumed_hidden: int = 0
    emitted_tokens: list = field(default_factory=list)
    phase: Phase = Phase.INTERLEAVING
    hit_eos: bool = False


def new_stream(decoder: SpeechDecoder, proj: Projection, sched: ScheduleConfig = ScheduleConfig(),
               max_tokens: int = 512) -> StreamState:
    return StreamState(DecoderSession(decoder, proj), sched, max_tokens)


def _emit(state: StreamState, budget: int | None) -> list[int]:
    """Greedy steps until EOS_SP, max_tokens, or ``budget`` tokens (None = unbounded)."""
    cfg = state.session.cfg
    out: list[int] = []
    while budget is None or len(out) < budget:
        if len(state.emitted_tokens) >= state.max_tokens:
            state.phase = Phase.DONE
            break
        tok = state.session.next_token()
        if tok == cfg.eos_sp:
            state.hit_eos = True
            state.phase = Phase.DONE
            break
        sid = cfg.to_speech_id(tok)
        state.emitted_tokens.append(sid)
        out.append(sid)
    return out


def decode_streaming(state: StreamState, event) -> tuple[StreamState, list[int]]:
    """Advance the stream by one event; returns the state and newly emitted speech ids.

    Emitted ids are codebook indices; EOS_SP shows up as phase DONE with
    ``hit_eos`` set rather than as an id. The state is updated in place.
    """
    if state.phase is Phase.DONE:
        raise StreamError(f"{type(event).__name__} after the stream is DONE")
    if isinstance(event, PushHidden):
        if state.phase is Phase.DRAINING:
            raise StreamError("PushHidden after FinishHidden")
        state.session.feed_hidden(event.vector)
        state.consumed_hidden += 1
        if state.consumed_hidden % state.sched.m_hidden == 0:
            return state, _emit(state, state.sched.n_tokens)
        return state, []
    if isinstance(event, FinishHidden):
        state.phase = Phase.DRAINING
        out = _emit(state, None)
        state.phase = Phase.DONE
        return state, out
    raise TypeError(f"unknown stream event {event!r}")


def decode_offline(hidden: np.ndarray, decoder: SpeechDecoder, proj: Projection,
                   sched: ScheduleConfig = ScheduleConfig(), max_tokens: int = 512) -> SpeechTokenSequence:
    """Whole-utterance greedy decoding: blocks of hidden states, N tokens each, then drain."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if max_tokens == 0:
        return SpeechTokenSequence([])
    state = new_stream(decoder, proj, sched, max_tokens)
    h = len(hidden)
    i = 0
    while i < h and state.phase is not Phase.DONE:
        block = hidden[i:i + sched.m_hidden]
        for row in block:
            state.session.feed_hidden(row)
        i += len(block)
        state.consumed_hidden = i
        if i < h:
            _emit(state, sched.n_tokens)
    if state.phase is not Phase.DONE:
        _emit(state, None)
    return SpeechTokenSequence(list(state.emitted_tokens))


def write_token_dump(path, ids: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in ids) + "#EOS\n", encoding="utf-8")


def read_token_dump(path) -> list[int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[-1] != "#EOS":
        raise ValueError(f"{path}: token dump lacks the #EOS sentinel line")
    return [int(x) for x in lines[:-1]]
