"""Finite-difference checks over every kernel kind and the composite models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import Adapter
from .micro_lm import LmConfig, MicroLM
from .nn import (
    KernelKind,
    KernelSpec,
    Module,
    SiLU,
    SoftmaxCrossEntropy,
    build_kernel,
    generator,
    grad_check,
)
from .nn.gradcheck import input_grad_check, relative_error
from .speech_decoder import DecoderConfig, Projection, SpeechDecoder, build_training_sequence, collate, speech_loss
from .stream_core import ScheduleConfig


@dataclass
class SuiteRow:
    name: str
    param_error: float
    input_error: float
    worst: str = ""

    @property
    def max_error(self) -> float:
        return max(self.param_error, self.input_error)


class _Holder(Module):
    def __init__(self, **parts):
        for k, v in parts.items():
            setattr(self, k, v)


def _jitter(module: Module, rng: np.random.Generator) -> None:
    """Move parameters off their init values (LayerNorm starts at exactly 1 / 0)."""
    for p in module.parameters().values():
        p.value += rng.normal(scale=0.1, size=p.value.shape)


def random_spec(kind: KernelKind, rng: np.random.Generator) -> KernelSpec:
    r = lambda lo, hi: int(rng.integers(lo, hi + 1))  # noqa: E731
    if kind is KernelKind.LINEAR:
        return KernelSpec(kind, {"d_in": r(1, 5), "d_out": r(1, 5)})
    if kind is KernelKind.CONV1D:
        k = r(1, 3)
        return KernelSpec(kind, {"c_in": r(1, 4), "c_out": r(1, 4), "kernel": k, "stride": r(1, 2), "pad": r(0, k - 1)})
    if kind is KernelKind.EMBEDDING:
        return KernelSpec(kind, {"vocab": r(2, 6), "dim": r(1, 4)})
    if kind is KernelKind.LAYERNORM:
        # width 2 is degenerate: the normalized output is +-1 whatever the input
        return KernelSpec(kind, {"dim": r(3, 6)})
    if kind is KernelKind.CAUSAL_ATTENTION:
        heads = r(1, 2)
        return KernelSpec(kind, {"dim": heads * r(1, 3), "heads": heads})
    if kind is KernelKind.FFN:
        return KernelSpec(kind, {"d_in": r(1, 4), "d_hidden": r(2, 8), "d_out": r(1, 4)})
    return KernelSpec(kind, {"classes": r(2, 6)})


def _in_width(spec: KernelSpec) -> int:
    d = spec.dims
    return d.get("d_in") or d.get("c_in") or d.get("dim")


def check_kernel(spec: KernelSpec, rng: np.random.Generator, eps: float = 1e-6) -> SuiteRow:
    """Parameter and input gradients of one kernel under a random upstream gradient."""
    kind = spec.kind
    name = kind.name
    b, t = int(rng.integers(1, 3)), int(rng.integers(1, 6))
    if kind is KernelKind.SOFTMAX_CE:
        k = spec.dims["classes"]
        logits = rng.normal(size=(b, t, k))
        targets = rng.integers(0, k, size=(b, t))
        mask = rng.random((b, t)) < 0.7
        mask.flat[0] = True
        ce = SoftmaxCrossEntropy()

        def fn(x):
            return np.array(ce.forward(x, targets, mask))

        err = input_grad_check(fn, lambda up: ce.backward(float(up)).reshape(logits.shape), logits,
                               np.array(1.0), eps)
        return SuiteRow(name, 0.0, err)
    kernel = build_kernel(spec, rng)
    _jitter(kernel, rng)
    if kind is KernelKind.EMBEDDING:
        x = rng.integers(0, spec.dims["vocab"], size=(b, t))
    else:
        x = rng.normal(size=(b, t, _in_width(spec)))
    if kind is KernelKind.CONV1D:
        d = spec.dims
        if (t + 2 * d["pad"] - d["kernel"]) < 0:
            x = rng.normal(size=(b, d["kernel"], d["c_in"]))
    up = rng.normal(size=kernel.forward(x).shape)
    holder = _Holder(k=kernel)

    def loss(m, inp, grad):
        out = m.k.forward(inp)
        value = float((out * up).sum())
        if grad:
            m.k.backward(up)
        return value

    res = grad_check(holder, loss, x, eps)
    in_err = 0.0
    if kind is not KernelKind.EMBEDDING:
        in_err = input_grad_check(kernel.forward, kernel.backward, x.copy(), up, eps)
    return SuiteRow(name, res.max_rel_error, in_err, res.worst_name)


def check_silu(rng: np.random.Generator, eps: float = 1e-6) -> SuiteRow:
    act = SiLU()
    x = rng.normal(size=(2, 3, 4))
    return SuiteRow("SILU", 0.0, input_grad_check(act.forward, act.backward, x, rng.normal(size=x.shape), eps))


def check_adapter(rng: np.random.Generator, eps: float = 1e-6) -> SuiteRow:
    adapter = Adapter(3, 4, rng, ffn_mult=2)
    _jitter(adapter, rng)
    x = rng.normal(size=(2, 9, 3))
    lengths = [9, 6]
    up = rng.normal(size=adapter.forward(x, lengths).shape)
    holder = _Holder(adapter=adapter)

    def loss(m, inp, grad):
        out = m.adapter.forward(inp, lengths)
        if grad:
            m.adapter.backward(up)
        return float((out * up).sum())

    res = grad_check(holder, loss, x, eps)
    in_err = input_grad_check(lambda v: adapter.forward(v, lengths), adapter.backward, x.copy(), up, eps)
    return SuiteRow("adapter", res.max_rel_error, in_err, res.worst_name)


def check_micro_lm(rng: np.random.Generator, eps: float = 1e-6) -> SuiteRow:
    """Two-layer micro-LM: text CE plus a hidden-state term, with spliced external embeddings."""
    cfg = LmConfig(vocab_size=12, d_llm=8, layers=2, heads=2, max_len=16)
    lm = MicroLM(cfg, rng)
    _jitter(lm, rng)
    b, t = 2, 5
    ids = rng.integers(0, cfg.vocab_size, size=(b, t))
    ext = rng.normal(size=(b, t, cfg.d_llm))
    ext_mask = np.zeros((b, t), dtype=bool)
    ext_mask[:, 1:3] = True
    targets = rng.integers(0, cfg.vocab_size, size=(b, t))
    hidden_up = rng.normal(scale=0.1, size=(b, t, cfg.d_llm))
    holder = _Holder(llm=lm)

    def run(m, e, grad):
        logits, hidden = m.llm.forward(ids, e, ext_mask)
        ce = SoftmaxCrossEntropy()
        value = ce.forward(logits, targets) + float((hidden * hidden_up).sum())
        d_ext = None
        if grad:
            d_ext = m.llm.backward(ce.backward().reshape(logits.shape), hidden_up)
        return value, d_ext

    res = grad_check(holder, lambda m, e, grad: run(m, e, grad)[0], ext, eps)
    # external-embedding gradient against central differences
    _, analytic = run(holder, ext, True)
    lm.zero_grad()
    numeric = np.zeros_like(ext)
    for i, j in zip(*np.nonzero(ext_mask)):
        for c in range(cfg.d_llm):
            orig = ext[i, j, c]
            ext[i, j, c] = orig + eps
            upv = run(holder, ext, False)[0]
            ext[i, j, c] = orig - eps
            dnv = run(holder, ext, False)[0]
            ext[i, j, c] = orig
            numeric[i, j, c] = (upv - dnv) / (2 * eps)
    in_err = float(relative_error(analytic[ext_mask], numeric[ext_mask], 1e-6).max())
    return SuiteRow("micro_lm", res.max_rel_error, in_err, res.worst_name)


def check_projection_decoder(rng: np.random.Generator, eps: float = 1e-6) -> SuiteRow:
    """Projection + speech decoder under the interleaved speech loss, plus the hidden-row gradient."""
    cfg = DecoderConfig(text_vocab=4, codebook_size=6, d_dec=8, layers=2, heads=2, max_len=32)
    decoder = SpeechDecoder(cfg, rng)
    proj = Projection(5, cfg.d_dec, rng)
    _jitter(decoder, rng)
    _jitter(proj, rng)
    sched = ScheduleConfig(2, 3, 2)
    seqs = [
        build_training_sequence(rng.normal(size=(3, 5)), rng.integers(0, 6, size=4), sched, cfg),
        build_training_sequence(rng.normal(size=(2, 5)), rng.integers(0, 6, size=2), sched, cfg),
    ]
    batch = collate(seqs, cfg)
    holder = _Holder(projection=proj, speech_decoder=decoder)

    def loss(m, hidden, grad):
        value, _, _, _ = speech_loss(m.speech_decoder, m.projection, batch, grad=grad, hidden_override=hidden)
        return value

    hidden = batch.hidden.copy()
    res = grad_check(holder, loss, hidden, eps)
    _, _, _, analytic = speech_loss(decoder, proj, batch, grad=True, hidden_override=hidden)
    holder.zero_grad()
    numeric = np.zeros_like(hidden)
    for i, j in zip(*np.nonzero(batch.hidden_mask)):
        for c in range(hidden.shape[2]):
            orig = hidden[i, j, c]
            hidden[i, j, c] = orig + eps
            upv = loss(holder, hidden, False)
            hidden[i, j, c] = orig - eps
            dnv = loss(holder, hidden, False)
            hidden[i, j, c] = orig
            numeric[i, j, c] = (upv - dnv) / (2 * eps)
    m = batch.hidden_mask
    in_err = float(relative_error(analytic[m], numeric[m], 1e-6).max())
    return SuiteRow("projection+decoder", res.max_rel_error, in_err, res.worst_name)


def run_suite(seed: int = 0, eps: float = 1e-6) -> list[SuiteRow]:
    rows = []
    for kind in KernelKind:
        rng = generator(seed, "grad-suite", kind.name)
        rows.append(check_kernel(random_spec(kind, rng), rng, eps))
    rows.append(check_silu(generator(seed, "grad-suite", "silu"), eps))
    rows.append(check_adapter(generator(seed, "grad-suite", "adapter"), eps))
    rows.append(check_micro_lm(generator(seed, "grad-suite", "micro_lm"), eps))
    rows.append(check_projection_decoder(generator(seed, "grad-suite", "decoder"), eps))
    return rows
