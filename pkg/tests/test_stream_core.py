import math

import pytest
from hypothesis import given, settings, strategies as st

from streams2s.frontend import Adapter, EncoderStub
from streams2s.latency import simulate_pipeline, simulated_first_audio
from streams2s.nn import generator
from streams2s.stream_core import (
    InterleaveLayout,
    LatencyParams,
    RateConfig,
    ScheduleConfig,
    Slot,
    chunk_boundaries,
    downsampled_length,
    first_audio_latency,
    interleave_layout,
    loss_mask,
)

H, S = Slot.HIDDEN, Slot.SPEECH


def brute_layout(h, s, m, n):
    """Consume/emit loop written token by token, independent of the block arithmetic."""
    out = []
    while h or s:
        if h and s:
            for _ in range(m):
                if h:
                    out.append("H")
                    h -= 1
            if not h:
                out.extend("S" * s)
                s = 0
                continue
            for _ in range(n):
                if s:
                    out.append("S")
                    s -= 1
        elif h:
            out.append("H")
            h -= 1
        else:
            out.append("S")
            s -= 1
    return "".join(out)


def test_layout_examples():
    assert interleave_layout(4, 8).slots == (H,) * 4 + (S,) * 8
    assert interleave_layout(0, 0).slots == ()
    got = interleave_layout(10, 30, ScheduleConfig(4, 8))
    assert str(got) == "H" * 4 + "S" * 8 + "H" * 4 + "S" * 8 + "H" * 2 + "S" * 14


@pytest.mark.parametrize("m,n", [(4, 8), (1, 1), (3, 5), (2, 7)])
def test_layout_matches_brute_force(m, n):
    cfg = ScheduleConfig(m, n)
    for h in range(0, 40):
        for s in range(0, 40):
            assert str(interleave_layout(h, s, cfg)) == brute_layout(h, s, m, n)


def test_layout_rejects_negative_counts():
    with pytest.raises(ValueError):
        interleave_layout(-1, 3)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 64), st.integers(0, 64), st.integers(1, 9), st.integers(1, 9))
def test_layout_invariants(h, s, m, n):
    lay = interleave_layout(h, s, ScheduleConfig(m, n))
    assert lay.slots.count(H) == h and lay.slots.count(S) == s
    runs = lay.runs()
    speech_runs = [length for kind, length in runs if kind is S]
    long_runs = [i for i, (kind, length) in enumerate(runs) if kind is S and length > n]
    # only the final drain run may exceed N
    assert len(long_runs) <= 1
    if long_runs:
        assert long_runs[0] == len(runs) - 1
    # hidden runs stay within M, except the tail left over once speech is exhausted
    for i, (kind, length) in enumerate(runs):
        if kind is H and length > m:
            assert i == len(runs) - 1 and sum(speech_runs) == s
    if H in lay.slots:
        last_h = max(i for i, x in enumerate(lay.slots) if x is H)
        assert all(x is S for x in lay.slots[last_h + 1:])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 64), st.integers(0, 64), st.integers(1, 6), st.integers(1, 6))
def test_layout_prefix_consistent(h, s, m, n):
    cfg = ScheduleConfig(m, n)
    shorter = interleave_layout(h, max(0, s - n), cfg)
    longer = interleave_layout(h, s, cfg)
    # both layouts agree up to the point where the shorter one first runs out of speech
    upto = 0
    emitted = 0
    for slot in shorter.slots:
        if slot is S:
            emitted += 1
        upto += 1
        if emitted == shorter.s_total:
            break
    if shorter.s_total == 0:
        upto = 0
    assert longer.slots[:upto] == shorter.slots[:upto]


def test_loss_mask():
    assert loss_mask(interleave_layout(4, 8)) == [False] * 4 + [True] * 8
    assert loss_mask(InterleaveLayout((), 0, 0)) == []
    assert sum(loss_mask(interleave_layout(10, 30))) == 30


@given(st.integers(0, 80), st.integers(0, 80), st.integers(1, 8), st.integers(1, 8))
def test_loss_mask_count(h, s, m, n):
    mask = loss_mask(interleave_layout(h, s, ScheduleConfig(m, n)))
    assert sum(mask) == s and len(mask) == h + s


def test_chunk_boundaries():
    assert chunk_boundaries(8, 4) == [(0, 4), (4, 8)]
    assert chunk_boundaries(0, 4) == []
    assert chunk_boundaries(10, 4) == [(0, 4), (4, 8), (8, 10)]
    with pytest.raises(ValueError):
        chunk_boundaries(3, 0)


@given(st.integers(0, 500), st.integers(1, 50))
def test_chunk_boundaries_partition(s, c):
    spans = chunk_boundaries(s, c)
    covered = [i for a, b in spans for i in range(a, b)]
    assert covered == list(range(s))
    assert all(b - a == c for a, b in spans[:-1])


def test_first_audio_latency():
    p = LatencyParams(0.010, 0.005, 0.020)
    assert first_audio_latency(ScheduleConfig(4, 8, 4), p) == pytest.approx(0.080, abs=1e-15)
    assert first_audio_latency(ScheduleConfig(), LatencyParams(0, 0, 0)) == 0.0


@settings(max_examples=300, deadline=None)
@given(
    st.integers(1, 8), st.integers(1, 16), st.integers(1, 8),
    st.floats(0, 0.05), st.floats(0, 0.05), st.floats(0, 0.05),
)
def test_latency_matches_simulation(m, n, c, ch, cs, cv):
    cfg, p = ScheduleConfig(m, n, c), LatencyParams(ch, cs, cv)
    assert abs(first_audio_latency(cfg, p) - simulated_first_audio(cfg, p)) <= 1e-9


def test_simulation_chunks_cover_stream():
    trace = simulate_pipeline(10, 30, ScheduleConfig(4, 8, 4), LatencyParams(0.01, 0.005, 0.02))
    spans = [c.token_span for c in trace.chunks]
    assert spans[0][0] == 0 and spans[-1][1] == 30
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert all(c.synth_start >= c.ready_at for c in trace.chunks)


def test_downsampled_length():
    assert downsampled_length(100) == 25
    assert downsampled_length(0) == 0
    assert downsampled_length(7) == 2


def test_downsampled_length_matches_adapter():
    adapter = Adapter(3, 4, generator(0, "t"), ffn_mult=1)
    rng = generator(1, "x")
    for n in range(0, 1001):
        want = downsampled_length(n)
        assert want in (math.ceil(n / 4), math.ceil(n / 4) + 1)
        if n % 37 == 0 or n < 20:
            assert adapter.forward(rng.normal(size=(1, n, 3))).shape[1] == want


def test_rate_config_validation():
    r = RateConfig()
    assert r.encoder_hop == 640 and r.samples_per_token == 1280
    with pytest.raises(ValueError):
        RateConfig(encoder_hz=20.0)
    with pytest.raises(ValueError):
        RateConfig(sample_rate=16001)
    with pytest.raises(ValueError):
        ScheduleConfig(0, 8)


def test_encoder_frame_count():
    frames = EncoderStub().encode([0.0] * 64000, 16000)
    assert len(frames) == 100
