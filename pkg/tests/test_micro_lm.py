import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streams2s.micro_lm import (
    LengthOverflowError,
    LmConfig,
    MicroLM,
    MixedSequence,
    PromptTemplates,
    TextVocab,
    generate_continuation,
    lm_forward,
    response_hidden_states,
)
from streams2s.nn import ShapeError, SoftmaxCrossEntropy, generator, optimizer_step
from streams2s.training.base_lm import TextWorld

CFG = LmConfig(vocab_size=24, d_llm=16, layers=2, heads=2, max_len=32)


def make_lm(seed=0, cfg=CFG):
    return MicroLM(cfg, generator(seed, "lm"))


def test_vocab_layout_and_round_trip(tmp_path):
    v = TextVocab.default(128)
    reserved = [v.pad, v.bos, v.eos, v.sep, v["<emo:sad>"], v["<age:elderly>"], v["<gender:male>"]]
    assert len(set(reserved)) == len(reserved) and max(reserved) < 128
    assert len(v) == 128
    v.save(tmp_path / "vocab.txt")
    lines = (tmp_path / "vocab.txt").read_text().splitlines()
    assert lines[v.bos] == "<bos>"
    assert TextVocab.load(tmp_path / "vocab.txt").tokens == v.tokens
    assert v.decode(v.encode("w000 w005")) == "w000 w005"
    with pytest.raises(ValueError, match="unknown token"):
        v.encode("nonsense")


def test_single_bos():
    logits, hidden = lm_forward(MixedSequence([1]), make_lm())
    assert logits.shape == (1, CFG.vocab_size) and hidden.shape == (1, CFG.d_llm)


def test_embedding_path_equivalence():
    lm = make_lm()
    ids = [1, 5, 7, 9, 3]
    a = lm_forward(MixedSequence(ids), lm)
    mixed = list(ids)
    mixed[2] = lm.embed.table.value[7].copy()
    b = lm_forward(MixedSequence(mixed), lm)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_embedding_width_checked():
    with pytest.raises(ShapeError):
        lm_forward(MixedSequence([1, np.zeros(3)]), make_lm())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 500), st.integers(1, 9))
def test_causality(seed, pos):
    lm = make_lm(seed)
    rng = generator(seed, "ids")
    ids = [int(i) for i in rng.integers(0, CFG.vocab_size, size=10)]
    _, h1 = lm_forward(MixedSequence(ids), lm)
    ids[pos] = (ids[pos] + 1) % CFG.vocab_size
    _, h2 = lm_forward(MixedSequence(ids), lm)
    assert h1[:pos].tobytes() == h2[:pos].tobytes()


def test_length_overflow():
    lm = make_lm()
    with pytest.raises(LengthOverflowError):
        lm_forward(MixedSequence([1] * 33), lm)
    with pytest.raises(LengthOverflowError):
        generate_continuation(MixedSequence([1] * 30), 3, lm)


def test_greedy_replay():
    lm = make_lm(3)
    prefix = MixedSequence([1, 6, 8, np.full(CFG.d_llm, 0.1), 3])
    out = generate_continuation(prefix, 6, lm)
    assert generate_continuation(prefix, 0, lm) == []
    seq = MixedSequence(prefix.items)
    for tok in out:
        logits, _ = lm_forward(seq, lm)
        assert tok == int(np.argmax(logits[-1]))
        seq.items.append(tok)
    if len(out) < 6:
        logits, _ = lm_forward(seq, lm)
        assert int(np.argmax(logits[-1])) == 2
    assert generate_continuation(prefix, 6, lm) == out


def test_overfit_single_pair():
    lm = make_lm(1)
    prompt, cont = [1, 7, 8, 9, 3], [12, 15, 11]
    seq = prompt + cont + [2]
    ids = np.array([seq[:-1]])
    targets = np.array([seq[1:]])
    mask = np.zeros_like(targets, dtype=bool)
    mask[0, len(prompt) - 1:] = True
    for _ in range(300):
        logits, _ = lm.forward(ids)
        ce = SoftmaxCrossEntropy()
        ce.forward(logits, targets, mask)
        lm.backward(ce.backward().reshape(logits.shape))
        optimizer_step(lm.parameters(), 0.3)
    assert generate_continuation(MixedSequence(prompt), 8, lm) == cont


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 200), st.integers(0, 6), st.integers(0, 6))
def test_response_hidden_slicing(seed, n_prompt, n_resp):
    lm = make_lm(seed)
    rng = generator(seed, "rh")
    prompt = MixedSequence([1] + [int(i) for i in rng.integers(4, 24, size=n_prompt)] + [rng.normal(size=16)])
    resp = [int(i) for i in rng.integers(4, 24, size=n_resp)]
    got = response_hidden_states(prompt, resp, lm)
    assert got.shape == (n_resp, CFG.d_llm)
    if n_resp:
        _, hidden = lm_forward(MixedSequence.concat(prompt, resp), lm)
        assert got.tobytes() == hidden[len(prompt):].tobytes()
        # changing response token j leaves earlier states untouched
        j = n_resp - 1
        changed = list(resp)
        changed[j] = 4 if changed[j] != 4 else 5
        other = response_hidden_states(prompt, changed, lm)
        assert other[:j].tobytes() == got[:j].tobytes()


def test_prompt_templates():
    v = TextVocab.default()
    t = PromptTemplates()
    seq = t.render(t.text_with_emotion, v, v.encode("w001 w002"), tag="sad")
    assert seq.items == [v.bos, v["w001"], v["w002"], v["<emo:sad>"], v.sep]
    with pytest.raises(ValueError, match="emotion tag"):
        t.render(t.text_with_emotion, v, [v["w001"]])


def test_text_world_rule():
    v = TextVocab.default()
    world = TextWorld(v, 0)
    words = v.word_ids()[:6]
    plain = world.continuation(words)
    assert plain == [world.successor[w] for w in words[:4]]
    tagged = world.continuation(words, "happy")
    assert tagged[0] == world.marker["happy"] and tagged[1:] == [world.successor[w] for w in words[2:5]]
    assert sorted(world.successor.values()) == sorted(v.word_ids())
