"""Dense layers with hand-written backward passes.

Every layer caches what its backward needs during ``forward`` and consumes
the cache in ``backward``. Backward accumulates into ``Parameter.grad``
regardless of the trainable flag; freezing is the optimizer's job.
Activations are (batch, time, width) unless noted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..stream_core import conv_out_length
from .core import MissingCacheError, Module, Parameter, ShapeError, check_shape, uniform_init


class _Cached(Module):
    _cache = None

    def _take(self):
        if self._cache is None:
            raise MissingCacheError(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache


class Linear(_Cached):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = Parameter(uniform_init(rng, (d_in, d_out), d_in))
        self.bias = Parameter(uniform_init(rng, (d_out,), d_in))
        self.d_in, self.d_out = d_in, d_out

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"Linear: expected last dim {self.d_in}, got shape {x.shape}")
        self._cache = x
        return x @ self.weight.value + self.bias.value

    def backward(self, dy):
        x = self._take()
        x2 = x.reshape(-1, self.d_in)
        dy2 = dy.reshape(-1, self.d_out)
        self.weight.grad += x2.T @ dy2
        self.bias.grad += dy2.sum(axis=0)
        return dy @ self.weight.value.T


class Conv1d(_Cached):
    """1-D convolution over time, input (B, T, C_in), weight (K, C_in, C_out)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int, rng: np.random.Generator):
        fan_in = kernel * c_in
        self.weight = Parameter(uniform_init(rng, (kernel, c_in, c_out), fan_in))
        self.bias = Parameter(uniform_init(rng, (c_out,), fan_in))
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.pad = kernel, stride, pad

    def forward(self, x):
        check_shape("Conv1d input", x.shape, (None, None, self.c_in))
        b, t, _ = x.shape
        t_out = conv_out_length(t, self.kernel, self.stride, self.pad)
        xp = np.zeros((b, t + 2 * self.pad, self.c_in))
        xp[:, self.pad:self.pad + t] = x
        taps = [xp[:, k:k + self.stride * t_out:self.stride] for k in range(self.kernel)]
        cols = np.stack(taps, axis=2).reshape(b, t_out, self.kernel * self.c_in)
        self._cache = (cols, t)
        w = self.weight.value.reshape(self.kernel * self.c_in, self.c_out)
        return cols @ w + self.bias.value

    def backward(self, dy):
        cols, t = self._take()
        b, t_out, _ = dy.shape
        w = self.weight.value.reshape(self.kernel * self.c_in, self.c_out)
        dy2 = dy.reshape(-1, self.c_out)
        self.weight.grad += (cols.reshape(-1, w.shape[0]).T @ dy2).reshape(self.weight.shape)
        self.bias.grad += dy2.sum(axis=0)
        dcols = (dy @ w.T).reshape(b, t_out, self.kernel, self.c_in)
        dxp = np.zeros((b, t + 2 * self.pad, self.c_in))
        for k in range(self.kernel):
            dxp[:, k:k + self.stride * t_out:self.stride] += dcols[:, :, k]
        return dxp[:, self.pad:self.pad + t]


class Embedding(_Cached):
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator):
        self.table = Parameter(uniform_init(rng, (vocab, dim), 1))
        self.vocab, self.dim = vocab, dim

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab):
            raise ShapeError(f"Embedding: ids must lie in [0, {self.vocab}), got range [{ids.min()}, {ids.max()}]")
        self._cache = ids
        return self.table.value[ids]

    def backward(self, dy):
        ids = self._take()
        np.add.at(self.table.grad, ids.reshape(-1), dy.reshape(-1, self.dim))
        return None


class LayerNorm(_Cached):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.shift = Parameter(np.zeros(dim))
        self.dim, self.eps = dim, eps

    def forward(self, x):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"LayerNorm: expected last dim {self.dim}, got shape {x.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + self.eps)
        xhat = xc * inv
        self._cache = (xhat, inv)
        return xhat * self.gain.value + self.shift.value

    def backward(self, dy):
        xhat, inv = self._take()
        flat = dy.reshape(-1, self.dim)
        self.gain.grad += (flat * xhat.reshape(-1, self.dim)).sum(axis=0)
        self.shift.grad += flat.sum(axis=0)
        g = dy * self.gain.value
        return inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True))


class SiLU(_Cached):
    def forward(self, x):
        sig = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, sig)
        return x * sig

    def backward(self, dy):
        x, sig = self._take()
        return dy * (sig * (1.0 + x * (1.0 - sig)))


class FeedForward(Module):
    """Position-wise Linear -> SiLU -> Linear."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.act = SiLU()
        self.fc2 = Linear(d_hidden, d_out, rng)

    def forward(self, x):
        return self.fc2.forward(self.act.forward(self.fc1.forward(x)))

    def backward(self, dy):
        return self.fc1.backward(self.act.backward(self.fc2.backward(dy)))


class CausalSelfAttention(_Cached):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ShapeError(f"attention width {dim} not divisible by {heads} heads")
        self.qkv = Linear(dim, 3 * dim, rng)
        self.out = Linear(dim, dim, rng)
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)

    def _split(self, x):
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, x):
        check_shape("CausalSelfAttention input", x.shape, (None, None, self.dim))
        b, t, _ = x.shape
        qkv = self.qkv.forward(x)
        q, k, v = (self._split(a) for a in np.split(qkv, 3, axis=-1))
        scores = (q @ k.transpose(0, 1, 3, 2)) * self.scale
        future = np.triu(np.ones((t, t), dtype=bool), k=1)
        scores = np.where(future, -np.inf, scores)
        scores = scores - scores.max(axis=-1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(axis=-1, keepdims=True)
        ctx = probs @ v
        self._cache = (q, k, v, probs)
        merged = ctx.transpose(0, 2, 1, 3).reshape(b, t, self.dim)
        return self.out.forward(merged)

    def backward(self, dy):
        q, k, v, probs = self._take()
        b, t, _ = dy.shape
        dctx = self._split(self.out.backward(dy))
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dprobs = dctx @ v.transpose(0, 1, 3, 2)
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dq = (dscores @ k) * self.scale
        dk = (dscores.transpose(0, 1, 3, 2) @ q) * self.scale
        merge = lambda a: a.transpose(0, 2, 1, 3).reshape(b, t, self.dim)
        dqkv = np.concatenate([merge(dq), merge(dk), merge(dv)], axis=-1)
        return self.qkv.backward(dqkv)

    def step(self, x, cache: dict):
        """One position of incremental decoding; ``cache`` holds past keys/values."""
        qkv = x @ self.qkv.weight.value + self.qkv.bias.value
        q, k, v = (a.reshape(self.heads, 1, self.head_dim) for a in np.split(qkv, 3))
        if "k" in cache:
            cache["k"] = np.concatenate([cache["k"], k], axis=1)
            cache["v"] = np.concatenate([cache["v"], v], axis=1)
        else:
            cache["k"], cache["v"] = k, v
        scores = (q @ cache["k"].transpose(0, 2, 1)) * self.scale
        scores = scores - scores.max(axis=-1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(axis=-1, keepdims=True)
        ctx = (probs @ cache["v"]).reshape(self.dim)
        return ctx @ self.out.weight.value + self.out.bias.value


class SoftmaxCrossEntropy(_Cached):
    """Mean cross-entropy over the rows selected by ``mask``.

    Unselected rows are never read, so their targets may hold anything.
    """

    def forward(self, logits, targets, mask=None):
        logits = logits.reshape(-1, logits.shape[-1])
        targets = np.asarray(targets).reshape(-1)
        if mask is None:
            mask = np.ones(len(targets), dtype=bool)
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if len(targets) != logits.shape[0] or len(mask) != logits.shape[0]:
            raise ShapeError(
                f"SoftmaxCrossEntropy: {logits.shape[0]} logit rows, {len(targets)} targets, {len(mask)} mask entries"
            )
        rows = np.flatnonzero(mask)
        sel = logits[rows]
        tgt = targets[rows].astype(np.int64)
        shifted = sel - sel.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        nll = logz - shifted[np.arange(len(rows)), tgt]
        count = max(len(rows), 1)
        probs = np.exp(shifted - logz[:, None])
        self._cache = (logits.shape, rows, tgt, probs, count)
        return float(nll.sum() / count)

    def backward(self, upstream: float = 1.0):
        shape, rows, tgt, probs, count = self._take()
        grad = np.zeros(shape)
        g = probs.copy()
        g[np.arange(len(rows)), tgt] -= 1.0
        grad[rows] = g * (upstream / count)
        return grad

    @staticmethod
    def probabilities(logits):
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)


class KernelKind(enum.Enum):
    LINEAR = "linear"
    CONV1D = "conv1d"
    EMBEDDING = "embedding"
    LAYERNORM = "layernorm"
    CAUSAL_ATTENTION = "causal_attention"
    FFN = "ffn"
    SOFTMAX_CE = "softmax_ce"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, val in self.dims.items():
            if key != "pad" and val <= 0:
                raise ValueError(f"{self.kind.value}: dimension {key} must be positive, got {val}")
            if key == "pad" and val < 0:
                raise ValueError(f"{self.kind.value}: pad must be >= 0, got {val}")
        if self.kind is KernelKind.CAUSAL_ATTENTION and self.dims["dim"] % self.dims["heads"]:
            raise ValueError(f"attention width {self.dims['dim']} not divisible by {self.dims['heads']} heads")


def build_kernel(spec: KernelSpec, rng: np.random.Generator):
    d = spec.dims
    kind = spec.kind
    if kind is KernelKind.LINEAR:
        return Linear(d["d_in"], d["d_out"], rng)
    if kind is KernelKind.CONV1D:
        return Conv1d(d["c_in"], d["c_out"], d.get("kernel", 3), d.get("stride", 2), d.get("pad", 1), rng)
    if kind is KernelKind.EMBEDDING:
        return Embedding(d["vocab"], d["dim"], rng)
    if kind is KernelKind.LAYERNORM:
        return LayerNorm(d["dim"])
    if kind is KernelKind.CAUSAL_ATTENTION:
        return CausalSelfAttention(d["dim"], d["heads"], rng)
    if kind is KernelKind.FFN:
        return FeedForward(d["d_in"], d["d_hidden"], d.get("d_out", d["d_in"]), rng)
    if kind is KernelKind.SOFTMAX_CE:
        return SoftmaxCrossEntropy()
    raise ValueError(f"unknown kernel kind {kind}")
