"""Stage runners: adapter alignment, decoder TTS + streaming adaptation, joint SFT.

Every runner snapshots the model before and after training and audits the
difference against its freeze schedule; the count lands in the report.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ..micro_lm import MixedSequence, generate_continuation, response_hidden_states
from ..nn import FreezeSchedule, SoftmaxCrossEntropy, optimizer_step
from ..nn.core import generator
from ..speech_decoder import (
    DecoderSequence,
    FinishHidden,
    PushHidden,
    build_training_sequence,
    build_tts_sequence,
    collate,
    decode_offline,
    decode_streaming,
    new_stream,
    speech_loss,
)
from ..stream_core import ScheduleConfig, downsampled_length
from .corpora import AlignmentPair, SftRecord, StreamingSample, TtsPair

BATCH_SIZE = 8

STAGE1 = FreezeSchedule.trainable("adapter")
STAGE2A = FreezeSchedule.trainable("speech_decoder")
STAGE2B = FreezeSchedule.trainable("projection", "speech_decoder")
STAGE3 = FreezeSchedule.trainable("adapter", "llm", "projection", "speech_decoder")


class Variant(enum.Enum):
    SEMANTIC = "semantic"
    EMOTION = "emotion"


class MissingTagError(ValueError):
    pass


class VocabularyOverflowError(ValueError):
    pass


class EmptyModalityError(ValueError):
    pass


class CheckpointMismatchError(ValueError):
    pass


@dataclass
class StageReport:
    stage: str
    steps: int
    final_loss: float
    accuracy: float
    freeze_violations: int
    extras: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)  # per-step batch loss

    def to_json(self) -> str:
        rec = {
            "stage": self.stage,
            "steps": self.steps,
            "final_loss": self.final_loss,
            "accuracy": self.accuracy,
            "freeze_violations": self.freeze_violations,
        }
        rec.update(self.extras)
        return json.dumps(rec, sort_keys=True)


def assert_freeze(before: dict, after: dict, schedule: FreezeSchedule) -> list[str]:
    """Names of FROZEN parameters whose bytes differ between two snapshots."""
    if set(before) != set(after):
        diff = sorted(set(before) ^ set(after))
        raise CheckpointMismatchError(f"snapshots disagree on parameter names: {diff}")
    bad = []
    for name in sorted(before):
        a, b = np.asarray(before[name]), np.asarray(after[name])
        if a.shape != b.shape:
            raise CheckpointMismatchError(f"{name}: shape {a.shape} vs {b.shape}")
        if not schedule.allows(name) and a.tobytes() != b.tobytes():
            bad.append(name)
    return bad


def batch_order(n: int, steps: int, seed: int, stage: str, batch_size: int = BATCH_SIZE) -> Iterator[np.ndarray]:
    """Index batches for ``steps`` steps; a fresh seeded permutation every epoch."""
    rng = generator(seed, "batches", stage)
    perm, pos = rng.permutation(n), 0
    for _ in range(steps):
        if pos + batch_size > n:
            idx = perm[pos:]
            perm, pos = rng.permutation(n), batch_size - len(idx)
            idx = np.concatenate([idx, perm[:pos]]) if pos else idx
        else:
            idx = perm[pos:pos + batch_size]
            pos += batch_size
        yield idx


def _train(model, schedule: FreezeSchedule, stage: str, n: int, steps: int, lr: float, seed: int, step_fn) -> tuple:
    params = model.parameters()
    before = model.state()
    model.zero_grad()
    history = []
    for idx in batch_order(n, steps, seed, stage, min(BATCH_SIZE, n)):
        history.append(step_fn(idx))
        optimizer_step(params, lr, schedule)
    violations = assert_freeze(before, model.state(), schedule)
    return history, violations


# ---- LLM-side batches (stages 1 and 3) ----

@dataclass
class _LmExample:
    ids: np.ndarray  # (L,) text ids, pad where the adapter output goes
    ext_pos: np.ndarray  # positions holding adapter rows, in order
    targets: np.ndarray
    mask: np.ndarray
    features: np.ndarray | None = None
    response_start: int = 0  # position of the first response token (stage 3)
    n_response: int = 0


def _lm_example(model, prompt: MixedSequence, n_ext: int, answer: Sequence[int], with_eos: bool,
                features=None) -> _LmExample:
    """prompt + answer, targets = answer (+ EOS) predicted from the position before each."""
    ids, _, ext_mask = prompt.to_arrays(model.cfg.d_llm, model.vocab.pad)
    p = len(ids)
    ids = np.concatenate([ids, np.asarray(answer, dtype=np.int64)])
    tgt = list(answer) + ([model.vocab.eos] if with_eos else [])
    targets = np.full(len(ids), model.vocab.pad, dtype=np.int64)
    mask = np.zeros(len(ids), dtype=bool)
    for j, t in enumerate(tgt):
        if p - 1 + j < len(ids):
            targets[p - 1 + j] = t
            mask[p - 1 + j] = True
    ext_pos = np.flatnonzero(ext_mask)
    assert len(ext_pos) == n_ext
    return _LmExample(ids, ext_pos, targets, mask, features, p, len(answer))


def _speech_prompt(model, emb, emotion: str | None = None) -> MixedSequence:
    """Speech prompt around adapter rows; the emotional variant appends the tag like the text prompt."""
    if isinstance(emb, int):
        emb = np.zeros((emb, model.cfg.d_llm))
    if emotion is None:
        return model.prompts.render(model.prompts.speech, model.vocab, emb)
    return model.prompts.render(model.prompts.text_with_emotion, model.vocab, emb, tag=emotion)


def _lm_pass(model, exs: Sequence[_LmExample], grad: bool, dhidden_fn=None, text_weight: float = 1.0):
    """Batched LLM pass with adapter embeddings spliced in for speech examples.

    ``dhidden_fn(hidden) -> (loss_extra, dhidden)`` lets stage 3 add the
    decoder's loss on top of the text loss.
    Returns (loss, correct, count, hidden, extra).
    """
    b = len(exs)
    length = max(len(e.ids) for e in exs)
    d = model.cfg.d_llm
    ids = np.full((b, length), model.vocab.pad, dtype=np.int64)
    targets = np.zeros((b, length), dtype=np.int64)
    mask = np.zeros((b, length), dtype=bool)
    ext = np.zeros((b, length, d))
    ext_mask = np.zeros((b, length), dtype=bool)
    for i, e in enumerate(exs):
        n = len(e.ids)
        ids[i, :n], targets[i, :n], mask[i, :n] = e.ids, e.targets, e.mask
    speech_rows = [i for i, e in enumerate(exs) if e.features is not None]
    if speech_rows:
        frames = max(len(exs[i].features) for i in speech_rows)
        feats = np.zeros((len(speech_rows), frames, model.cfg.d_enc))
        lengths = []
        for k, i in enumerate(speech_rows):
            f = exs[i].features
            feats[k, :len(f)] = f
            lengths.append(len(f))
        emb = model.adapter.forward(feats, lengths)
        for k, i in enumerate(speech_rows):
            pos = exs[i].ext_pos
            ext[i, pos] = emb[k, :len(pos)]
            ext_mask[i, pos] = True
    logits, hidden = model.llm.forward(ids, ext, ext_mask)
    ce = SoftmaxCrossEntropy()
    loss = ce.forward(logits, targets, mask)
    correct = int((np.argmax(logits, axis=-1) == targets)[mask].sum())
    count = int(mask.sum())
    extra = None
    if dhidden_fn is not None:
        extra, dhidden = dhidden_fn(hidden)
    else:
        dhidden = None
    if grad:
        dlogits = ce.backward(text_weight).reshape(logits.shape)
        dext = model.llm.backward(dlogits, dhidden)
        if speech_rows:
            demb = np.zeros_like(emb)
            for k, i in enumerate(speech_rows):
                pos = exs[i].ext_pos
                demb[k, :len(pos)] = dext[i, pos]
            model.adapter.backward(demb)
    return loss, correct, count, hidden, extra


def _evaluate_lm(model, exs, dhidden_fn=None):
    loss_sum = correct = count = 0
    for a in range(0, len(exs), BATCH_SIZE):
        chunk = exs[a:a + BATCH_SIZE]
        loss, c, n, _, _ = _lm_pass(model, chunk, False, dhidden_fn)
        loss_sum += loss * n
        correct += c
        count += n
    return loss_sum / max(count, 1), correct / max(count, 1)


def _embed_speech(model, features: np.ndarray) -> np.ndarray:
    return model.adapter.forward(features[None])[0]


# ---- stage 1 ----

def run_stage1(model, pairs: Sequence[AlignmentPair], variant: Variant = Variant.SEMANTIC, steps: int = 2000,
               lr: float = 0.1, seed: int = 0) -> StageReport:
    """Train the adapter so speech prompts reproduce the transcript's continuation."""
    variant = Variant(variant)
    if not pairs:
        raise ValueError("stage 1 needs at least one alignment pair")
    if variant is Variant.EMOTION:
        missing = [i for i, p in enumerate(pairs) if p.emotion is None]
        if missing:
            raise MissingTagError(f"emotion variant needs an emotion tag on every pair; missing at {missing[:5]}")
    exs = []
    for p in pairs:
        n_emb = downsampled_length(len(p.features))
        prompt = _speech_prompt(model, n_emb, p.emotion if variant is Variant.EMOTION else None)
        exs.append(_lm_example(model, prompt, n_emb, p.continuation, p.stopped_at_eos, p.features))
    initial_loss, _ = _evaluate_lm(model, exs)

    def step(idx):
        loss, *_ = _lm_pass(model, [exs[i] for i in idx], True)
        return loss

    stage = f"1{variant.value[0]}"
    history, violations = _train(model, STAGE1, stage, len(exs), steps, lr, seed, step)
    final_loss, acc = _evaluate_lm(model, exs)
    return StageReport(stage, steps, final_loss, acc, len(violations),
                       {"initial_loss": initial_loss, "exact_match": continuation_exact_match(model, pairs, variant),
                        "variant": variant.value}, history)


def continuation_exact_match(model, pairs: Sequence[AlignmentPair], variant: Variant = Variant.SEMANTIC) -> float:
    """Fraction of pairs whose greedy continuation from speech equals the recorded one."""
    hits = 0
    for p in pairs:
        emotion = p.emotion if Variant(variant) is Variant.EMOTION else None
        prompt = _speech_prompt(model, _embed_speech(model, p.features), emotion)
        max_new = len(p.continuation) + (1 if p.stopped_at_eos else 0)
        got = generate_continuation(prompt, max_new, model.llm, model.vocab.eos)
        hits += got == list(p.continuation)
    return hits / len(pairs)


# ---- stage 2 ----

def _check_vocab(model, text_ids, speech_ids):
    cfg = model.cfg
    for t in text_ids:
        if not 0 <= int(t) < cfg.text_vocab:
            raise VocabularyOverflowError(f"text id {t} outside decoder text range [0, {cfg.text_vocab})")
    for s in speech_ids:
        if not 0 <= int(s) < cfg.codebook_size:
            raise VocabularyOverflowError(f"speech id {s} outside codebook range [0, {cfg.codebook_size})")


def _decoder_eval(model, seqs: Sequence[DecoderSequence], proj):
    loss_sum = correct = count = 0
    for a in range(0, len(seqs), BATCH_SIZE):
        batch = collate(seqs[a:a + BATCH_SIZE], model.cfg.decoder)
        loss, c, n, _ = speech_loss(model.speech_decoder, proj, batch)
        loss_sum += loss * n
        correct += c
        count += n
    return loss_sum / max(count, 1), correct / max(count, 1)


def _run_decoder_stage(model, seqs, proj, schedule, stage, steps, lr, seed):
    dcfg = model.cfg.decoder
    initial_loss, _ = _decoder_eval(model, seqs, proj)

    def step(idx):
        batch = collate([seqs[i] for i in idx], dcfg)
        loss, *_ = speech_loss(model.speech_decoder, proj, batch, grad=True)
        return loss

    history, violations = _train(model, schedule, stage, len(seqs), steps, lr, seed, step)
    final_loss, acc = _decoder_eval(model, seqs, proj)
    return StageReport(stage, steps, final_loss, acc, len(violations), {"initial_loss": initial_loss}, history)


def run_stage2_offline(model, pairs: Sequence[TtsPair], steps: int = 2000, lr: float = 0.1,
                       seed: int = 0) -> StageReport:
    """Decoder-only TTS: text embedded through the decoder's own table as a prefix."""
    if not pairs:
        raise ValueError("stage 2a needs at least one pair")
    dcfg = model.cfg.decoder
    seqs = []
    for p in pairs:
        _check_vocab(model, p.text, p.speech.ids)
        seqs.append(build_tts_sequence(p.text, p.speech, dcfg))
    return _run_decoder_stage(model, seqs, None, STAGE2A, "2a", steps, lr, seed)


def prompt_hidden(model, prompt_ids: Sequence[int], response: Sequence[int]) -> np.ndarray:
    prompt = model.prompts.render(model.prompts.text, model.vocab, list(prompt_ids))
    return response_hidden_states(prompt, list(response), model.llm)


def run_stage2_streaming(model, samples: Sequence[StreamingSample], steps: int = 2000, lr: float = 0.1,
                         seed: int = 0, sched: ScheduleConfig = ScheduleConfig()) -> StageReport:
    """Projection + decoder on interleaved (hidden, speech) sequences from the frozen LLM."""
    if not samples:
        raise ValueError("stage 2b needs at least one sample")
    dcfg = model.cfg.decoder
    seqs, hiddens = [], []
    for s in samples:
        _check_vocab(model, list(s.prompt) + list(s.response), s.speech.ids)
        h = prompt_hidden(model, s.prompt, s.response)
        hiddens.append(h)
        seqs.append(build_training_sequence(h, s.speech, sched, dcfg))
    report = _run_decoder_stage(model, seqs, model.projection, STAGE2B, "2b", steps, lr, seed)
    # one token past the target is enough to tell a match from a miss
    hits = sum(stream_decode(model, h, sched, len(s.speech) + 1) == list(s.speech.ids)
               for h, s in zip(hiddens, samples))
    report.extras["streaming_reproduced"] = hits / len(samples)
    return report


def stream_decode(model, hidden: np.ndarray, sched: ScheduleConfig = ScheduleConfig(), max_tokens: int = 512):
    """Push hidden states one at a time, then finish; returns all emitted codebook ids."""
    state = new_stream(model.speech_decoder, model.projection, sched, max_tokens)
    out = []
    for row in hidden:
        state, ids = decode_streaming(state, PushHidden(row))
        out += ids
        if state.phase.value == "done":
            return out
    state, ids = decode_streaming(state, FinishHidden())
    return out + ids


# ---- stage 3 ----

def run_stage3(model, records: Sequence[SftRecord], steps: int = 2000, lr: float = 0.05, seed: int = 0,
               sched: ScheduleConfig = ScheduleConfig(), text_weight: float = 1.0,
               speech_weight: float = 1.0) -> StageReport:
    """Joint text CE (LLM response) + speech CE (decoder) over mixed-modality records."""
    n_speech = sum(r.speech_input for r in records)
    if n_speech == 0 or n_speech == len(records):
        kind = "text" if n_speech == 0 else "speech"
        raise EmptyModalityError(f"stage 3 needs both speech- and text-input records; got only {kind} inputs")
    dcfg = model.cfg.decoder
    exs, layouts = [], []
    for r in records:
        _check_vocab(model, list(r.prompt) + list(r.response), r.speech.ids)
        if r.speech_input:
            n_emb = downsampled_length(len(r.features))
            ex = _lm_example(model, _speech_prompt(model, n_emb), n_emb, r.response, True, r.features)
        else:
            prompt = model.prompts.render(model.prompts.text, model.vocab, list(r.prompt))
            ex = _lm_example(model, prompt, 0, r.response, True)
        exs.append(ex)
        # hidden rows are filled per step from the live LLM; the layout only needs the count
        layouts.append(build_training_sequence(np.zeros((len(r.response), model.cfg.d_llm)), r.speech, sched, dcfg))

    def joint(idx, grad):
        chunk = [exs[i] for i in idx]
        seqs = [layouts[i] for i in idx]
        batch = collate(seqs, dcfg)
        rows = [np.flatnonzero(s.hidden_mask) for s in seqs]

        def decoder_part(hidden):
            hb = np.zeros_like(batch.hidden)
            for k, e in enumerate(chunk):
                hb[k, rows[k]] = hidden[k, e.response_start:e.response_start + e.n_response]
            loss, c, n, dh = speech_loss(model.speech_decoder, model.projection, batch, grad=grad,
                                         hidden_override=hb, weight=speech_weight)
            dhidden = None
            if grad:
                dhidden = np.zeros_like(hidden)
                for k, e in enumerate(chunk):
                    dhidden[k, e.response_start:e.response_start + e.n_response] = dh[k, rows[k]]
            return (loss, c, n), dhidden

        tl, tc, tn, _, (sl, sc, sn) = _lm_pass(model, chunk, grad, decoder_part, text_weight)
        if grad:
            return text_weight * tl + speech_weight * sl
        return tl, tc, tn, sl, sc, sn

    def evaluate():
        agg = np.zeros(6)
        for a in range(0, len(exs), BATCH_SIZE):
            tl, tc, tn, sl, sc, sn = joint(np.arange(a, min(a + BATCH_SIZE, len(exs))), False)
            agg += (tl * tn, tc, tn, sl * sn, sc, sn)
        return agg[0] / agg[2], agg[1] / agg[2], agg[3] / agg[5], agg[4] / agg[5]

    t0, _, s0, _ = evaluate()

    def step(idx):
        return joint(idx, True)

    history, violations = _train(model, STAGE3, "3", len(exs), steps, lr, seed, step)
    tl, tacc, sl, sacc = evaluate()
    text_ok, speech_ok = sft_exact_match(model, records, sched)
    extras = {
        "initial_loss": text_weight * t0 + speech_weight * s0,
        "text_loss": tl,
        "speech_loss": sl,
        "text_accuracy": tacc,
        "speech_accuracy": sacc,
        "exact_match_speech_input": speech_ok,
        "exact_match_text_input": text_ok,
    }
    return StageReport("3", steps, text_weight * tl + speech_weight * sl, sacc, len(violations), extras, history)



def record_prompt(model, rec: SftRecord) -> MixedSequence:
    if rec.speech_input:
        return _speech_prompt(model, _embed_speech(model, rec.features))
    return model.prompts.render(model.prompts.text, model.vocab, list(rec.prompt))


def respond(model, prompt: MixedSequence, max_new: int, sched: ScheduleConfig = ScheduleConfig(),
            max_speech: int = 512):
    """Greedy text response, then the decoder's speech ids for it."""
    text = generate_continuation(prompt, max_new, model.llm, model.vocab.eos)
    hidden = response_hidden_states(prompt, text, model.llm)
    speech = decode_offline(hidden, model.speech_decoder, model.projection, sched, max_speech) if len(text) else None
    return text, (list(speech.ids) if speech is not None else [])


def sft_exact_match(model, records: Sequence[SftRecord], sched: ScheduleConfig = ScheduleConfig()):
    """(text-input, speech-input) fractions whose response text and speech ids both match."""
    hits = {False: [], True: []}
    for r in records:
        text, speech = respond(model, record_prompt(model, r), len(r.response) + 1, sched, len(r.speech) + 1)
        hits[r.speech_input].append(text == list(r.response) and speech == list(r.speech.ids))
    return float(np.mean(hits[False])), float(np.mean(hits[True]))
