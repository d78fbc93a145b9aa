import io
import wave

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streams2s.audio import WavFormatError, read_wav, wav_bytes
from streams2s.frontend import (
    Adapter,
    EncoderStub,
    FeatureFrames,
    SampleRateError,
    adapter_forward,
    encode_features,
    receptive_end_frame,
)
from streams2s.gradsuite import check_adapter
from streams2s.nn import ShapeError, generator


def test_frame_counts():
    assert len(encode_features(np.zeros(64000), 16000)) == 100
    assert len(encode_features(np.zeros(0), 16000)) == 0
    # partial trailing frame is dropped: floor(duration * 25)
    assert len(encode_features(np.zeros(64000 + 639), 16000)) == 100


def test_silence_frames_identical():
    frames = encode_features(np.zeros(16000), 16000).data
    assert all(row.tobytes() == frames[0].tobytes() for row in frames)


def test_sample_rate_mismatch():
    with pytest.raises(SampleRateError, match="16000"):
        encode_features(np.zeros(100), 8000)


def test_encoder_frames_are_local():
    rng = generator(0, "wav")
    wav = rng.normal(size=16000) * 0.1
    a = encode_features(wav, 16000).data
    wav[640 * 10 + 5] += 0.5
    b = encode_features(wav, 16000).data
    changed = [i for i in range(len(a)) if a[i].tobytes() != b[i].tobytes()]
    assert changed == [10]


def test_encoder_has_no_trainable_params():
    stub = EncoderStub()
    assert all(not p.trainable for p in stub.parameters().values())


def test_adapter_lengths():
    ad = Adapter(32, 64, generator(0, "adapter"))
    for n, want in ((100, 25), (0, 0), (7, 2)):
        out = adapter_forward(FeatureFrames(np.zeros((n, 32))), ad)
        assert len(out) == want and out.dim == 64 and out.rate == 6.25


def test_adapter_shape_mismatch():
    ad = Adapter(32, 64, generator(0, "adapter"))
    with pytest.raises(ShapeError):
        adapter_forward(FeatureFrames(np.zeros((8, 16))), ad)


def test_adapter_gradient():
    assert check_adapter(generator(3, "adapter-fd")).max_error < 1e-5


def test_adapter_lengths_mask_matches_unpadded():
    rng = generator(2, "mask")
    ad = Adapter(3, 4, rng, ffn_mult=2)
    x = rng.normal(size=(2, 12, 3))
    full = ad.forward(x, [12, 7])
    alone = ad.forward(x[1:2, :7])
    assert np.allclose(full[1, :alone.shape[1]], alone[0], rtol=0, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 200), st.integers(4, 40))
def test_adapter_locality(seed, first_changed_frame):
    rng = generator(seed, "locality")
    stub = EncoderStub(8)
    ad = Adapter(8, 8, rng, ffn_mult=1)
    wav = rng.normal(size=640 * 48) * 0.1
    t = 640 * first_changed_frame + int(rng.integers(640))
    before = adapter_forward(stub.encode(wav, 16000), ad).data
    wav[t:] += rng.normal(size=len(wav) - t) * 0.1
    after = adapter_forward(stub.encode(wav, 16000), ad).data
    for j in range(len(before)):
        if receptive_end_frame(j) < t // 640:
            assert before[j].tobytes() == after[j].tobytes()


def _raw_wav(channels=1, width=2, rate=16000, frames=b"\0\0" * 10):
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(frames)
    return buf.getvalue()


def test_wav_round_trip_and_rejections():
    x = np.array([0.0, 0.5, -0.5, 1.0])
    back = read_wav(wav_bytes(x))
    assert np.allclose(back, x, atol=1 / 32767)
    with pytest.raises(WavFormatError, match="mono"):
        read_wav(_raw_wav(channels=2, frames=b"\0" * 40))
    with pytest.raises(WavFormatError, match="16-bit"):
        read_wav(_raw_wav(width=1, frames=b"\0" * 10))
    with pytest.raises(WavFormatError, match="8000"):
        read_wav(_raw_wav(rate=8000))
    with pytest.raises(WavFormatError):
        read_wav(b"RIFF not really a wav")
