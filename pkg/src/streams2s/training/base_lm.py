"""Toy "pretrained" base LLM: a text world with a sharp continuation rule.

A randomly initialised micro-LM spreads its next-token mass almost evenly,
so its greedy continuations hinge on tiny logit margins and make a poor
alignment target. The base model is therefore fitted, before any stage,
to a simple rule over fixed-length prompts:

* plain prompt ``<bos> w1..wn <sep>`` continues with ``f(w1) f(w2) ... f(wk) <eos>``
* tagged prompt ``<bos> w1..wn <emo:e> <sep>`` continues with
  ``m(e) f(w3) ... f(w(k+1)) <eos>``

``f`` is a fixed permutation of the word tokens and ``m(e)`` an
emotion-specific word. Every copied word sits the same distance behind the
position that emits it in both prompt kinds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..micro_lm import MicroLM, MixedSequence, PromptTemplates, TextVocab
from ..nn import FreezeSchedule, SoftmaxCrossEntropy, optimizer_step
from ..nn.core import generator
from ..tags import EMOTIONS

PROMPT_WORDS = 6
CONTINUATION_WORDS = 4


@dataclass
class TextWorld:
    vocab: TextVocab
    seed: int = 0

    def __post_init__(self):
        words = self.vocab.word_ids()
        rng = generator(self.seed, "text-world")
        self.successor = dict(zip(words, (int(w) for w in rng.permutation(words))))
        markers = rng.choice(words, size=len(EMOTIONS), replace=False)
        self.marker = {e: int(m) for e, m in zip(EMOTIONS, markers)}

    def continuation(self, words, emotion: str | None = None) -> list[int]:
        if len(words) != PROMPT_WORDS:
            raise ValueError(f"text-world prompts have exactly {PROMPT_WORDS} words, got {len(words)}")
        if emotion is None:
            return [self.successor[w] for w in words[:CONTINUATION_WORDS]]
        return [self.marker[emotion]] + [self.successor[w] for w in words[2:CONTINUATION_WORDS + 1]]

    def prompt(self, words, emotion: str | None = None, templates: PromptTemplates = PromptTemplates()):
        if emotion is None:
            return templates.render(templates.text, self.vocab, list(words))
        return templates.render(templates.text_with_emotion, self.vocab, list(words), tag=emotion)


def pretrain_base_lm(lm: MicroLM, vocab: TextVocab, steps: int = 3000, lr: float = 0.3, seed: int = 0,
                     batch_size: int = 16) -> list[float]:
    """Fit ``lm`` to the text world with fresh random prompts each step; returns batch losses."""
    world = TextWorld(vocab, seed)
    rng = generator(seed, "base-lm-data")
    words = np.array(vocab.word_ids())
    params = lm.parameters()
    everything = FreezeSchedule.trainable("llm")
    named = {f"llm.{k}": p for k, p in params.items()}
    losses = []
    for _ in range(steps):
        ids, tgts, masks = [], [], []
        for _ in range(batch_size):
            w = [int(x) for x in rng.choice(words, size=PROMPT_WORDS)]
            emo = EMOTIONS[int(rng.integers(len(EMOTIONS)))] if rng.random() < 0.5 else None
            prompt = world.prompt(w, emo)
            cont = world.continuation(w, emo) + [vocab.eos]
            seq = MixedSequence.concat(prompt, cont[:-1])
            x, _, _ = seq.to_arrays(lm.cfg.d_llm)
            t = np.zeros(len(x), dtype=np.int64)
            m = np.zeros(len(x), dtype=bool)
            p = len(prompt)
            t[p - 1:] = cont
            m[p - 1:] = True
            ids.append(x), tgts.append(t), masks.append(m)
        n = max(len(x) for x in ids)
        batch = np.full((batch_size, n), vocab.pad, dtype=np.int64)
        tb = np.zeros((batch_size, n), dtype=np.int64)
        mb = np.zeros((batch_size, n), dtype=bool)
        for i, (x, t, m) in enumerate(zip(ids, tgts, masks)):
            batch[i, :len(x)], tb[i, :len(x)], mb[i, :len(x)] = x, t, m
        logits, _ = lm.forward(batch)
        ce = SoftmaxCrossEntropy()
        losses.append(ce.forward(logits, tb, mb))
        lm.backward(ce.backward().reshape(logits.shape))
        optimizer_step(named, lr, everything)
    return losses
