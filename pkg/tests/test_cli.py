import json
import time

import numpy as np
import pytest

from streams2s.audio import read_wav, write_wav
from streams2s.cli import RunConfig, ValidationError, main


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_config_validation(tmp_path):
    assert RunConfig.from_dict({}) == RunConfig()
    with pytest.raises(ValidationError, match="unknown keys"):
        RunConfig.from_dict({"sed": 1})
    with pytest.raises(ValidationError, match="schedule"):
        RunConfig.from_dict({"schedule": {"m_hidden": 0}})
    with pytest.raises(ValidationError, match="unknown stage"):
        RunConfig.from_dict({"stages": {"9": {"steps": 1, "lr": 0.1}}})
    cfg = RunConfig.from_dict({"seed": 5, "schedule": {"m_hidden": 2, "n_tokens": 3}, "stages": {"2a": {"steps": 7, "lr": 0.2}}})
    assert cfg.schedule.m_hidden == 2 and cfg.stages["2a"].steps == 7 and cfg.stages["1s"].steps == 1000
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_exit_codes(tmp_path):
    bad = write_config(tmp_path / "bad.json", {"modle": {}})
    assert main(["grad-check", "--config", bad]) == 1
    assert main(["train", "--stage", "2b", "--out", str(tmp_path / "r")]) == 1
    assert main(["train", "--stage", "7"]) == 1
    assert main(["profile-latency", "--bogus"]) == 1
    assert main(["stats", "--manifest", str(tmp_path / "nope.jsonl")]) == 1
    assert main(["infer", "--text", "w001", "--out", str(tmp_path / "r")]) == 1
    (tmp_path / "garbage.json").write_text("{not json")
    assert main(["stats", "--config", str(tmp_path / "garbage.json")]) == 1


def test_datagen_smoke_and_rerun(tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["datagen", "--n", "100", "--out", str(tmp_path / "a")]) == 0
    assert time.perf_counter() - t0 < 60
    summary = json.loads(capsys.readouterr().out)
    assert summary["records"] == 125
    assert main(["datagen", "--n", "100", "--out", str(tmp_path / "b")]) == 0
    for name in ("manifest.jsonl", "seeds.jsonl", "stats.json"):
        assert (tmp_path / "a/datagen" / name).read_bytes() == (tmp_path / "b/datagen" / name).read_bytes()
    capsys.readouterr()
    assert main(["stats", "--out", str(tmp_path / "a")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["query_age"]["total"] == 125


def test_datagen_zero_then_stats_fails(tmp_path):
    assert main(["datagen", "--n", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "datagen/manifest.jsonl").read_text() == ""
    assert main(["stats", "--out", str(tmp_path)]) == 1
    assert main(["datagen", "--n", "-3", "--out", str(tmp_path)]) == 1


def test_profile_latency(tmp_path, capsys):
    assert main(["profile-latency"]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[1:]]
    assert any(r[:3] == ["4", "8", "4"] for r in rows)
    assert all(float(r[3]) == pytest.approx(float(r[4]), abs=1e-9) for r in rows)
    zero = write_config(tmp_path / "z.json", {"latency": {"cost_hidden": 0, "cost_speech_token": 0,
                                                          "cost_chunk_synth": 0}})
    assert main(["profile-latency", "--config", zero]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[1:]]
    assert all(float(r[3]) == 0.0 and float(r[4]) == 0.0 for r in rows)


def test_grad_check(capsys):
    assert main(["grad-check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "adapter" in out


def _infer(out, *extra):
    assert main(["infer", "--out", str(out), *extra]) == 0
    d = out / "infer"
    return (d / "response.wav").read_bytes(), (d / "tokens.txt").read_text(), (d / "trace.jsonl").read_text()


def test_infer_streaming_matches_offline(trained, tmp_path):
    out = trained.out_dir
    wav = trained.speaker(trained.new_model()).speak([10, 20, 30, 40], "sad")
    write_wav(tmp_path / "q.wav", wav, 16000)
    offline = _infer(out, "--input", str(tmp_path / "q.wav"))
    streaming = _infer(out, "--input", str(tmp_path / "q.wav"), "--streaming")
    assert offline[0] == streaming[0] and offline[1] == streaming[1]
    assert len(read_wav(out / "infer/response.wav")) > 0
    assert all(json.loads(line) for line in streaming[2].splitlines())
    text_off = _infer(out, "--text", "w003 w017 w042 w008")
    text_on = _infer(out, "--text", "w003 w017 w042 w008", "--streaming")
    assert text_off[0] == text_on[0]


def test_infer_empty_audio(trained, tmp_path):
    write_wav(tmp_path / "empty.wav", np.zeros(0), 16000)
    wav, tokens, _ = _infer(trained.out_dir, "--input", str(tmp_path / "empty.wav"), "--streaming")
    assert tokens == "#EOS\n"
    assert len(read_wav(trained.out_dir / "infer/response.wav")) == 0


def test_infer_rejects_bad_wav(trained, tmp_path):
    write_wav(tmp_path / "q8k.wav", np.zeros(800), 8000)
    assert main(["infer", "--out", str(trained.out_dir), "--input", str(tmp_path / "q8k.wav")]) == 1
    (tmp_path / "junk.wav").write_bytes(b"RIFFjunk")
    assert main(["infer", "--out", str(trained.out_dir), "--input", str(tmp_path / "junk.wav")]) == 1
