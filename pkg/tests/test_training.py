import numpy as np
import pytest

from streams2s.model import ModelConfig, S2SModel
from streams2s.nn import FreezeSchedule
from streams2s.nn import checkpoint
from streams2s.speech_decoder import build_tts_sequence, collate, speech_loss
from streams2s.tokenizer import SpeechTokenSequence
from streams2s.training import corpora, stages
from streams2s.training.pipeline import STAGE_ORDER, StageOrderError, TrainingRun

SMALL = ModelConfig(d_enc=8, d_llm=16, lm_max_len=128, codebook_size=16, d_dec=16, dec_max_len=256)


@pytest.fixture(scope="module")
def small():
    model = S2SModel(SMALL, seed=0)
    speaker = corpora.ReferenceSpeaker(model.vocab, 0)
    book = corpora.reference_codebook(speaker, SMALL.codebook_size, 0, n_utts=30)
    return model, speaker, book


def fresh():
    return S2SModel(SMALL, seed=0)


# ---- freeze audit ----

def test_assert_freeze_identical_and_trainable_only():
    model = fresh()
    before = model.state()
    assert stages.assert_freeze(before, model.state(), stages.STAGE1) == []
    after = model.state()
    after["adapter.conv1.weight"] = after["adapter.conv1.weight"] + 1.0
    assert stages.assert_freeze(before, after, stages.STAGE1) == []


@pytest.mark.parametrize("name", ["llm.body.blocks.1.attn.qkv.weight", "encoder_stub.filterbank",
                                  "speech_decoder.head.bias", "projection.linear.weight"])
def test_assert_freeze_fault_injection(name):
    model = fresh()
    before = model.state()
    after = {k: v.copy() for k, v in before.items()}
    flat = after[name].reshape(-1)
    flat[len(flat) // 2] = np.nextafter(flat[len(flat) // 2], np.inf)
    assert stages.assert_freeze(before, after, stages.STAGE1) == [name]


def test_assert_freeze_mismatch():
    before = fresh().state()
    missing = dict(before)
    missing.pop("projection.linear.bias")
    with pytest.raises(stages.CheckpointMismatchError, match="names"):
        stages.assert_freeze(before, missing, stages.STAGE1)
    reshaped = dict(before)
    reshaped["projection.linear.bias"] = np.zeros(3)
    with pytest.raises(stages.CheckpointMismatchError, match="shape"):
        stages.assert_freeze(before, reshaped, stages.STAGE1)


def test_stage_schedules():
    assert [c for c, m in stages.STAGE1.to_dict().items() if m == "trainable"] == ["adapter"]
    assert not stages.STAGE2B.component_trainable("llm")
    assert stages.STAGE2B.component_trainable("projection") and stages.STAGE2B.component_trainable("speech_decoder")
    frozen3 = [c for c, m in stages.STAGE3.to_dict().items() if m == "frozen"]
    assert set(frozen3) == {"encoder_stub", "tokenizer", "vocoder"}
    with pytest.raises(ValueError):
        FreezeSchedule.trainable("encoder_stub")


# ---- batching ----

def test_batch_order():
    a = list(stages.batch_order(20, 12, 3, "1s"))
    b = list(stages.batch_order(20, 12, 3, "1s"))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(len(x) == 8 for x in a)
    # first epoch covers every index before any repeats
    first = np.concatenate(a)[:16]
    assert len(set(first.tolist())) == 16
    other = list(stages.batch_order(20, 12, 3, "2a"))
    assert not all(np.array_equal(x, y) for x, y in zip(a, other))


# ---- stage ops on a small model ----

def test_stage1_lr_zero_is_identity(small):
    _, speaker, _ = small
    model = fresh()
    pairs = corpora.alignment_pairs(model, speaker, 4, 0)
    before = model.state()
    rep = stages.run_stage1(model, pairs, steps=3, lr=0.0)
    assert rep.final_loss == rep.extras["initial_loss"]
    after = model.state()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_stage1_only_adapter_moves(small):
    _, speaker, _ = small
    model = fresh()
    pairs = corpora.alignment_pairs(model, speaker, 4, 0)
    before = model.state()
    rep = stages.run_stage1(model, pairs, steps=5, lr=0.1)
    after = model.state()
    changed = {k.split(".")[0] for k in before if before[k].tobytes() != after[k].tobytes()}
    assert changed == {"adapter"} and rep.freeze_violations == 0
    assert rep.stage == "1s" and len(rep.history) == 5


def test_stage1_errors(small):
    _, speaker, _ = small
    model = fresh()
    pairs = corpora.alignment_pairs(model, speaker, 2, 0)
    with pytest.raises(stages.MissingTagError):
        stages.run_stage1(model, pairs, stages.Variant.EMOTION, steps=1)
    with pytest.raises(ValueError):
        stages.run_stage1(model, [], steps=1)


def test_stage2a_vocab_overflow_and_empty_target(small):
    _, speaker, book = small
    model = fresh()
    bad = [corpora.TtsPair([5, 6], SpeechTokenSequence([1, SMALL.codebook_size]))]
    with pytest.raises(stages.VocabularyOverflowError):
        stages.run_stage2_offline(model, bad, steps=1)
    with pytest.raises(stages.VocabularyOverflowError):
        stages.run_stage2_offline(model, [corpora.TtsPair([SMALL.text_vocab], SpeechTokenSequence([1]))], steps=1)
    seq = build_tts_sequence([5, 6, 7], [], SMALL.decoder)
    assert seq.loss_mask.sum() == 1 and seq.targets[seq.loss_mask].tolist() == [SMALL.decoder.eos_sp]
    loss, _, n, _ = speech_loss(model.speech_decoder, None, collate([seq], SMALL.decoder))
    assert n == 1 and loss > 0


def test_stage2_leaves_llm_untouched(small):
    _, speaker, book = small
    model = fresh()
    before = model.state()
    stages.run_stage2_offline(model, corpora.tts_pairs(speaker, book, 4, 0), steps=3, lr=0.1)
    mid = model.state()
    moved = {k.split(".")[0] for k in before if before[k].tobytes() != mid[k].tobytes()}
    assert moved == {"speech_decoder"}
    rep = stages.run_stage2_streaming(model, corpora.streaming_samples(speaker, book, 4, 0), steps=3, lr=0.1)
    after = model.state()
    moved = {k.split(".")[0] for k in mid if mid[k].tobytes() != after[k].tobytes()}
    assert moved == {"projection", "speech_decoder"} and rep.freeze_violations == 0


def test_stage3_needs_both_modalities(small):
    _, speaker, book = small
    model = fresh()
    only_speech = corpora.sft_records(model, speaker, book, 3, 0, 0)
    with pytest.raises(stages.EmptyModalityError, match="speech"):
        stages.run_stage3(model, only_speech, steps=1)
    only_text = corpora.sft_records(model, speaker, book, 0, 3, 0)
    with pytest.raises(stages.EmptyModalityError, match="text"):
        stages.run_stage3(model, only_text, steps=1)
    mixed = corpora.sft_records(model, speaker, book, 2, 2, 0)
    before = model.state()
    rep = stages.run_stage3(model, mixed, steps=2, lr=0.05)
    after = model.state()
    assert before["encoder_stub.filterbank"].tobytes() == after["encoder_stub.filterbank"].tobytes()
    moved = {k.split(".")[0] for k in before if before[k].tobytes() != after[k].tobytes()}
    assert moved == {"adapter", "llm", "projection", "speech_decoder"} and rep.freeze_violations == 0


def test_model_checkpoint_round_trip(tmp_path):
    model = fresh()
    model.save(tmp_path / "a.ckpt")
    other = S2SModel(SMALL, seed=9)
    other.load(tmp_path / "a.ckpt")
    other.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_stage_order(tmp_path):
    run = TrainingRun(tmp_path, SMALL)
    assert run.prerequisite("1s") is None and run.prerequisite("3") == "2b"
    with pytest.raises(StageOrderError):
        run.run("2a")
    with pytest.raises(ValueError):
        run.prerequisite("4")


def test_stage_report_json():
    rep = stages.StageReport("2a", 10, 0.5, 0.9, 0, {"initial_loss": 2.0}, [1.0])
    line = rep.to_json()
    assert "\n" not in line and '"stage": "2a"' in line and "history" not in line


# ---- full default pipeline (shared fixture) ----

def test_pipeline_reports(trained):
    reps = trained.reports
    assert list(reps) == list(STAGE_ORDER)
    assert all(r.freeze_violations == 0 for r in reps.values())
    assert reps["1s"].extras["exact_match"] >= 0.95 and reps["1e"].extras["exact_match"] >= 0.95
    assert reps["2a"].accuracy >= 0.99
    assert reps["2b"].extras["streaming_reproduced"] >= 0.9
    assert reps["3"].extras["exact_match_speech_input"] == 1.0
    assert reps["3"].extras["exact_match_text_input"] == 1.0


def test_smoothed_loss_decreases(trained):
    for rep in trained.reports.values():
        h = np.asarray(rep.history)
        windows = h[: len(h) // 100 * 100].reshape(-1, 100).mean(axis=1)
        assert np.all(np.diff(windows) < 0), rep.stage


def test_pipeline_checkpoints_round_trip(trained, tmp_path):
    for stage in STAGE_ORDER:
        path = trained.checkpoint_path(stage)
        model = trained.load_stage(stage)
        model.save(tmp_path / "again.ckpt")
        assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
        assert set(checkpoint.load(path)) == set(model.state())
