"""Pre-norm causal transformer stack shared by the micro-LM and the speech decoder."""

from __future__ import annotations

import numpy as np

from .core import Module
from .layers import CausalSelfAttention, FeedForward, LayerNorm


def sinusoid_table(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class Block(Module):
    def __init__(self, dim: int, heads: int, ffn_mult: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_mult * dim, dim, rng)

    def forward(self, x):
        x1 = x + self.attn.forward(self.ln1.forward(x))
        return x1 + self.ffn.forward(self.ln2.forward(x1))

    def backward(self, dy):
        dx1 = dy + self.ln2.backward(self.ffn.backward(dy))
        return dx1 + self.ln1.backward(self.attn.backward(dx1))

    def step(self, x, cache: dict):
        x1 = x + self.attn.step(self.ln1.forward(x), cache)
        return x1 + self.ffn.forward(self.ln2.forward(x1))


class Transformer(Module):
    """Blocks followed by a final LayerNorm; output is the final-layer state."""

    def __init__(self, dim: int, layers: int, heads: int, rng: np.random.Generator, ffn_mult: int = 4):
        self.blocks = [Block(dim, heads, ffn_mult, rng) for _ in range(layers)]
        self.ln_f = LayerNorm(dim)
        self.dim = dim

    def forward(self, x):
        for blk in self.blocks:
            x = blk.forward(x)
        return self.ln_f.forward(x)

    def backward(self, dh):
        dx = self.ln_f.backward(dh)
        for blk in reversed(self.blocks):
            dx = blk.backward(dx)
        return dx

    def new_cache(self) -> list[dict]:
        return [{} for _ in self.blocks]

    def step(self, x, caches: list[dict]):
        for blk, cache in zip(self.blocks, caches):
            x = blk.step(x, cache)
        return self.ln_f.forward(x)
