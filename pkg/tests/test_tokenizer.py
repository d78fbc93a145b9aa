import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streams2s.audio import mel_frames
from streams2s.nn import generator
from streams2s.tokenizer import (
    Codebook,
    InsufficientDataError,
    SpeechTokenSequence,
    TokenRangeError,
    build_codebook,
    dequantize,
    pool_features,
    quantize,
    tokenize_waveform,
)


def brute_nearest(x, book):
    out = []
    for row in x:
        best, best_d = 0, None
        for k, code in enumerate(book):
            d = float(((row - code) ** 2).sum())
            if best_d is None or d < best_d:
                best, best_d = k, d
        out.append(best)
    return out


def test_pool_counts_and_values():
    rng = generator(0, "mel")
    assert pool_features(np.zeros((80, 20))).shape == (10, 20)
    mel = rng.normal(size=(83, 4))
    pooled = pool_features(mel)
    assert pooled.shape == (11, 4)
    assert np.allclose(pooled[-1], mel[80:].mean(axis=0), rtol=0, atol=1e-15)
    assert np.allclose(pooled[0], mel[:8].mean(axis=0), rtol=0, atol=1e-15)
    const = pool_features(np.full((37, 3), 2.5))
    assert np.all(const == 2.5)


@given(st.integers(0, 400))
def test_rate_law(n):
    assert len(pool_features(np.zeros((n, 2)))) == -(-n // 8)


def test_codebook_trivial_and_blobs():
    rng = generator(0, "cb")
    pts = rng.normal(size=(6, 3))
    book = build_codebook(pts, 6, seed=1)
    assert sorted(map(tuple, book.vectors)) == sorted(map(tuple, pts))
    a = rng.normal(size=(50, 2)) * 0.1 + [10.0, 10.0]
    b = rng.normal(size=(70, 2)) * 0.1 - [10.0, 10.0]
    book = build_codebook(np.vstack([a, b]), 2, seed=3)
    got = sorted(map(tuple, book.vectors))
    want = sorted([tuple(b.mean(axis=0)), tuple(a.mean(axis=0))])
    assert np.allclose(got, want, rtol=0, atol=1e-9)


def test_codebook_deterministic():
    x = generator(0, "feats").normal(size=(500, 5))
    a, b = build_codebook(x, 16, seed=4), build_codebook(x, 16, seed=4)
    assert a.vectors.tobytes() == b.vectors.tobytes()
    assert build_codebook(x, 16, seed=5).vectors.tobytes() != a.vectors.tobytes()


def test_codebook_errors(tmp_path):
    with pytest.raises(InsufficientDataError):
        build_codebook(np.zeros((3, 2)), 4, seed=0)
    with pytest.raises(InsufficientDataError, match="distinct"):
        build_codebook(np.zeros((10, 2)), 4, seed=0)
    with pytest.raises(ValueError, match="duplicate"):
        Codebook(np.zeros((2, 3)))
    book = Codebook(np.arange(12.0).reshape(4, 3))
    book.save(tmp_path / "cb.ckpt")
    assert Codebook.load(tmp_path / "cb.ckpt").vectors.tobytes() == book.vectors.tobytes()


def test_quantize_rules():
    book = Codebook(np.array([[float(k), 0.0] for k in range(10)]))
    assert quantize(book.vectors[[4]], book).ids == [4]
    tie = Codebook(np.array([[0.0, 1.0], [0.0, -1.0]]))
    assert quantize(np.zeros((1, 2)), tie).ids == [0]
    with pytest.raises(ValueError, match="dim"):
        quantize(np.zeros((2, 3)), book)


def test_quantize_tie_toward_lower_index():
    vecs = np.zeros((8, 1))
    vecs[:, 0] = 10.0 + np.arange(8) * 10.0
    vecs[3, 0], vecs[7, 0] = -1.0, 1.0
    book = Codebook(vecs)
    assert quantize(np.zeros((1, 1)), book).ids == [3]


def test_quantize_brute_force():
    rng = generator(0, "nn")
    book = Codebook(rng.normal(size=(64, 6)))
    x = rng.normal(size=(10_000, 6))
    ids = quantize(x, book).ids
    sample = rng.choice(len(x), 400, replace=False)
    assert [ids[i] for i in sample] == brute_nearest(x[sample], book.vectors)
    # optimality over all rows, vectorised
    d2 = ((x[:, None, :] - book.vectors[None]) ** 2).sum(-1)
    chosen = d2[np.arange(len(x)), ids]
    assert np.all(chosen <= d2.min(axis=1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 31), max_size=40))
def test_round_trip(ids):
    book = Codebook(generator(2, "rt").normal(size=(32, 4)))
    assert quantize(dequantize(ids, book), book).ids == ids


def test_dequantize_edges():
    book = Codebook(np.eye(3))
    assert dequantize([], book).shape == (0, 3)
    with pytest.raises(TokenRangeError):
        dequantize([3], book)


def test_tokenize_waveform_rate():
    book = Codebook(generator(0, "w").normal(size=(8, 20)))
    wav = generator(0, "wav").normal(size=16000) * 0.1
    seq = tokenize_waveform(wav, book)
    assert isinstance(seq, SpeechTokenSequence)
    assert len(seq) == -(-len(mel_frames(wav)) // 8) == 13
    assert seq.duration_s == len(seq) / 12.5
