import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streams2s.gradsuite import check_projection_decoder
from streams2s.nn import generator, optimizer_step
from streams2s.speech_decoder import (
    DecoderConfig,
    DecoderSession,
    FinishHidden,
    Phase,
    Projection,
    PushHidden,
    SpeechDecoder,
    StreamError,
    build_training_sequence,
    collate,
    decode_offline,
    decode_streaming,
    new_stream,
    read_token_dump,
    speech_loss,
    write_token_dump,
)
from streams2s.stream_core import ScheduleConfig, Slot, interleave_layout, loss_mask

CFG = DecoderConfig(text_vocab=10, codebook_size=12, d_dec=16, layers=2, heads=2, max_len=256)
D_LLM = 6


def make(seed=0, cfg=CFG):
    rng = generator(seed, "decoder")
    return SpeechDecoder(cfg, rng), Projection(D_LLM, cfg.d_dec, rng)


def stream_all(dec, proj, hidden, sched, max_tokens):
    state = new_stream(dec, proj, sched, max_tokens)
    out = []
    for row in hidden:
        if state.phase is Phase.DONE:
            break
        state, ids = decode_streaming(state, PushHidden(row))
        out += ids
    if state.phase is not Phase.DONE:
        state, ids = decode_streaming(state, FinishHidden())
        out += ids
    return out


def test_vocab_partition():
    assert CFG.speech_offset == 10 and CFG.eos_sp == 22 and CFG.bos_sp == 23 and CFG.pad_sp == 24
    assert CFG.vocab_size == 25
    with pytest.raises(ValueError):
        DecoderConfig(d_dec=10, heads=3)


def test_training_sequence_layout():
    rng = generator(0, "seq")
    seq = build_training_sequence(rng.normal(size=(4, D_LLM)), list(range(8)), ScheduleConfig(4, 8), CFG)
    assert len(seq) == 13
    assert seq.slots == interleave_layout(4, 9, ScheduleConfig(4, 8)).slots
    assert seq.loss_mask.tolist() == loss_mask(interleave_layout(4, 9, ScheduleConfig(4, 8)))
    assert seq.input_ids[4] == CFG.bos_sp and seq.targets[-1] == CFG.eos_sp
    assert seq.targets[4:12].tolist() == [CFG.speech_offset + i for i in range(8)]
    empty = build_training_sequence(np.zeros((0, D_LLM)), [], ScheduleConfig(), CFG)
    assert len(empty) == 1 and empty.targets.tolist() == [CFG.eos_sp]
    with pytest.raises(ValueError):
        build_training_sequence(np.zeros(3), [1], ScheduleConfig(), CFG)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 300), st.integers(0, 9), st.integers(0, 12))
def test_masked_targets_do_not_touch_loss(seed, h, s):
    rng = generator(seed, "mask")
    dec, proj = make(seed)
    sched = ScheduleConfig(2, 3)
    seqs = [build_training_sequence(rng.normal(size=(h, D_LLM)), rng.integers(0, 12, size=s), sched, CFG),
            build_training_sequence(rng.normal(size=(3, D_LLM)), rng.integers(0, 12, size=2), sched, CFG)]
    batch = collate(seqs, CFG)
    base, _, _, _ = speech_loss(dec, proj, batch)
    noisy = batch.targets.copy()
    noisy[~batch.loss_mask] = rng.integers(0, CFG.vocab_size, size=int((~batch.loss_mask).sum()))
    batch.targets = noisy
    again, _, _, _ = speech_loss(dec, proj, batch)
    assert again == base


def test_projection_decoder_gradient():
    assert check_projection_decoder(generator(0, "pd")).max_error < 1e-4


def test_session_matches_batch_forward():
    dec, proj = make(1)
    rng = generator(1, "sess")
    seq = build_training_sequence(rng.normal(size=(5, D_LLM)), rng.integers(0, 12, size=6), ScheduleConfig(2, 2), CFG)
    batch = collate([seq], CFG)
    ext = proj.forward(batch.hidden)
    logits = dec.forward(batch.input_ids, ext, batch.hidden_mask)[0]
    sess = DecoderSession(dec, proj)
    for pos, slot in enumerate(seq.slots):
        if slot is Slot.HIDDEN:
            sess.feed_hidden(seq.hidden[pos])
        else:
            sess.prev = int(seq.input_ids[pos])
            h = sess._advance(dec.embed.table.value[sess.prev])
            step_logits = h @ dec.head.weight.value + dec.head.bias.value
            assert np.allclose(step_logits, logits[pos], rtol=0, atol=1e-11)


def test_stream_block_emission():
    dec, proj = make(2)
    rng = generator(2, "blocks")
    state = new_stream(dec, proj, ScheduleConfig(4, 8), max_tokens=500)
    for _ in range(3):
        state, ids = decode_streaming(state, PushHidden(rng.normal(size=D_LLM)))
        assert ids == []
    state, ids = decode_streaming(state, PushHidden(rng.normal(size=D_LLM)))
    assert len(ids) == 8 or state.hit_eos
    assert all(0 <= i < CFG.codebook_size for i in ids)


def test_stream_errors():
    dec, proj = make(3)
    state = new_stream(dec, proj, ScheduleConfig(1, 1), max_tokens=3)
    state, _ = decode_streaming(state, FinishHidden())
    assert state.phase is Phase.DONE
    with pytest.raises(StreamError):
        decode_streaming(state, PushHidden(np.zeros(D_LLM)))
    draining = new_stream(dec, proj, ScheduleConfig(), 3)
    draining.phase = Phase.DRAINING
    with pytest.raises(StreamError, match="after FinishHidden"):
        decode_streaming(draining, PushHidden(np.zeros(D_LLM)))


def test_offline_max_tokens():
    dec, proj = make(4)
    hidden = generator(4, "h").normal(size=(5, D_LLM))
    assert decode_offline(hidden, dec, proj, ScheduleConfig(), 0).ids == []
    assert len(decode_offline(hidden, dec, proj, ScheduleConfig(), 7).ids) <= 7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 24), st.integers(1, 5), st.integers(1, 6), st.integers(1, 60))
def test_streaming_equals_offline(seed, h, m, n, max_tokens):
    dec, proj = make(seed)
    hidden = generator(seed, "eq").normal(size=(h, D_LLM))
    sched = ScheduleConfig(m, n)
    assert stream_all(dec, proj, hidden, sched, max_tokens) == decode_offline(hidden, dec, proj, sched, max_tokens).ids


def test_streaming_prefix_property():
    # emissions up to push k depend only on the first k hidden states
    for seed in range(10):
        dec, proj = make(seed)
        rng = generator(seed, "prefix")
        sched = ScheduleConfig(1, 2)
        hidden = rng.normal(size=(8, D_LLM))
        other = hidden.copy()
        other[5:] = rng.normal(size=(3, D_LLM))
        per_push = []
        for rows in (hidden, other):
            state = new_stream(dec, proj, sched, 100)
            pushes = []
            for row in rows:
                if state.phase is Phase.DONE:
                    break
                state, ids = decode_streaming(state, PushHidden(row))
                pushes.append(ids)
            per_push.append(pushes)
        assert per_push[0][:5] == per_push[1][:5]


def test_overfit_reproduces_pair():
    dec, proj = make(6)
    rng = generator(6, "overfit")
    hidden = rng.normal(size=(5, D_LLM))
    tokens = [3, 7, 7, 1, 11, 0, 5]
    sched = ScheduleConfig(2, 3)
    batch = collate([build_training_sequence(hidden, tokens, sched, CFG)], CFG)
    params = {**{f"speech_decoder.{k}": v for k, v in dec.parameters().items()},
              **{f"projection.{k}": v for k, v in proj.parameters().items()}}
    for _ in range(200):
        speech_loss(dec, proj, batch, grad=True)
        optimizer_step(params, 0.1)
    assert decode_offline(hidden, dec, proj, sched, 50).ids == tokens


def test_token_dump_round_trip(tmp_path):
    path = tmp_path / "tokens.txt"
    write_token_dump(path, [5, 0, 12])
    assert path.read_text() == "5\n0\n12\n#EOS\n"
    assert read_token_dump(path) == [5, 0, 12]
    path.write_text("1\n2\n")
    with pytest.raises(ValueError, match="#EOS"):
        read_token_dump(path)
