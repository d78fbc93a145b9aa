"""End-to-end inference: prompt -> LLM response -> speech tokens -> waveform.

The LLM is run token by token and each response token's final-layer state
is handed downstream as soon as it exists. Streaming and offline decoding
consume exactly the same hidden rows, so they emit the same speech ids and,
through chunk-invariant synthesis, the same waveform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .frontend import FeatureFrames
from .latency import simulate_pipeline
from .micro_lm import MixedSequence, lm_forward
from .speech_decoder import FinishHidden, Phase, PushHidden, decode_offline, decode_streaming, new_stream
from .stream_core import LatencyParams, ScheduleConfig
from .token2wav import Vocoder
from .tokenizer import Codebook


def speech_prompt(model, waveform, sr: int) -> MixedSequence | None:
    """BOS, adapter embeddings, SEP; None when the audio yields no adapter output."""
    frames: FeatureFrames = model.encoder_stub.encode(waveform, sr)
    if len(frames) == 0:
        return None
    emb = model.adapter.forward(frames.data[None])[0]
    return model.prompts.render(model.prompts.speech, model.vocab, emb)


def text_prompt(model, text: str) -> MixedSequence:
    return model.prompts.render(model.prompts.text, model.vocab, model.vocab.encode(text))


def iter_response(model, prompt: MixedSequence, max_new: int) -> Iterator[tuple[int, np.ndarray]]:
    """Greedy response tokens, each paired with its final-layer hidden state.

    A token's state is known one step after the token is chosen (it has to be
    fed back first), which is also when the next token is decided.
    """
    seq = MixedSequence(prompt.items)
    pending = None
    for _ in range(max_new + 1):
        logits, hidden = lm_forward(seq, model.llm)
        if pending is not None:
            yield pending, hidden[-1].copy()
        if len(seq) - len(prompt) >= max_new:
            return
        tok = int(np.argmax(logits[-1]))
        if tok == model.vocab.eos:
            return
        seq.items.append(tok)
        pending = tok


@dataclass
class InferenceResult:
    text_ids: list = field(default_factory=list)
    speech_ids: list = field(default_factory=list)
    waveform: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chunk_spans: list = field(default_factory=list)


def respond_speech(model, prompt: MixedSequence | None, book: Codebook, sched: ScheduleConfig = ScheduleConfig(),
                   streaming: bool = False, max_new: int = 16, max_tokens: int = 512) -> InferenceResult:
    result = InferenceResult()
    if prompt is None:
        return result
    vocoder = Vocoder(book)
    vstate = vocoder.initial_state()
    parts = []

    def synth(ids):
        nonlocal vstate
        chunk, vstate = vocoder.synth_chunk(ids, vstate)
        parts.append(chunk.samples)
        result.chunk_spans.append(chunk.token_span)

    if streaming:
        state = new_stream(model.speech_decoder, model.projection, sched, max_tokens)
        buffered: list[int] = []

        def take(ids):
            buffered.extend(ids)
            result.speech_ids.extend(ids)
            while len(buffered) >= sched.chunk_tokens:
                synth(buffered[:sched.chunk_tokens])
                del buffered[:sched.chunk_tokens]

        for tok, h in iter_response(model, prompt, max_new):
            result.text_ids.append(tok)
            if state.phase is not Phase.DONE:
                state, ids = decode_streaming(state, PushHidden(h))
                take(ids)
        if state.phase is not Phase.DONE and result.text_ids:
            state, ids = decode_streaming(state, FinishHidden())
            take(ids)
        if buffered:
            synth(buffered)
    else:
        rows = []
        for tok, h in iter_response(model, prompt, max_new):
            result.text_ids.append(tok)
            rows.append(h)
        if rows:
            ids = list(decode_offline(np.stack(rows), model.speech_decoder, model.projection, sched, max_tokens).ids)
            result.speech_ids = ids
            for a in range(0, len(ids), sched.chunk_tokens):
                synth(ids[a:a + sched.chunk_tokens])
    result.waveform = np.concatenate(parts) if parts else np.zeros(0)
    return result


def timing_trace(n_hidden: int, n_tokens: int, sched: ScheduleConfig, costs: LatencyParams) -> list[dict]:
    """Per-chunk emission times under the cost model (seconds from the first hidden state)."""
    if n_hidden == 0 or n_tokens == 0:
        return []
    trace = simulate_pipeline(n_hidden, n_tokens, sched, costs)
    return [
        {"chunk": i, "tokens": list(c.token_span), "ready_s": c.ready_at, "emitted_s": c.synth_done}
        for i, c in enumerate(trace.chunks)
    ]
