"""Synthetic corpora with a learnable speech <-> text correspondence.

A fixed reference speaker renders each word token as 0.16 s of audio: two
80 ms "phones", each a chord of three sinusoids picked per (word, half).
That span is exactly 4 encoder frames, 1 adapter embedding, 2 speech tokens
and 16 mel frames, so every representation lines up token by token. The
utterance emotion adds a steady tone whose pitch depends on the emotion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..audio import mel_frames
from ..micro_lm import TextVocab, generate_continuation
from ..nn.core import generator
from ..tags import EMOTIONS
from ..tokenizer import Codebook, SpeechTokenSequence, build_codebook, pool_features, quantize

WORD_SAMPLES = 2560
EMOTION_TONES = dict(zip(EMOTIONS, (0.0, 520.0, 310.0, 880.0, 1240.0, 1650.0, 2300.0)))


class ReferenceSpeaker:
    def __init__(self, vocab: TextVocab, seed: int = 0, sample_rate: int = 16000):
        self.vocab = vocab
        self.sample_rate = sample_rate
        rng = generator(seed, "reference-speaker")
        n = len(vocab)
        self.freqs = rng.uniform(150.0, 6500.0, size=(n, 2, 3))
        self.gains = rng.uniform(0.08, 0.2, size=(n, 2, 3))

    def speak(self, ids, emotion: str = "neutral") -> np.ndarray:
        words = [int(i) for i in ids if not self.vocab.tokens[int(i)].startswith("<")]
        half = WORD_SAMPLES // 2
        t = np.arange(half) / self.sample_rate
        out = np.zeros(len(words) * WORD_SAMPLES)
        tone = EMOTION_TONES[emotion]
        for k, w in enumerate(words):
            for h in range(2):
                seg = (self.gains[w, h, :, None] * np.sin(2 * np.pi * self.freqs[w, h, :, None] * t)).sum(axis=0)
                if tone:
                    seg = seg + 0.12 * np.sin(2 * np.pi * tone * t)
                a = k * WORD_SAMPLES + h * half
                out[a:a + half] = seg
        return out

    def speech_features(self, ids, emotion: str = "neutral") -> np.ndarray:
        return pool_features(mel_frames(self.speak(ids, emotion)))

    def tokens(self, ids, book: Codebook, emotion: str = "neutral") -> SpeechTokenSequence:
        return quantize(self.speech_features(ids, emotion), book)


def random_words(vocab: TextVocab, rng: np.random.Generator, length: int) -> list[int]:
    words = vocab.word_ids()
    return [int(words[i]) for i in rng.integers(0, len(words), size=length)]


def reference_codebook(speaker: ReferenceSpeaker, size: int, seed: int, n_utts: int = 400, words_per_utt: int = 8) -> Codebook:
    """k-means codebook fitted on pooled mel frames of random reference utterances."""
    rng = generator(seed, "codebook-corpus")
    feats = []
    for _ in range(n_utts):
        emo = EMOTIONS[int(rng.integers(len(EMOTIONS)))]
        feats.append(speaker.speech_features(random_words(speaker.vocab, rng, words_per_utt), emo))
    return build_codebook(np.concatenate(feats), size, seed)


@dataclass
class AlignmentPair:
    features: np.ndarray  # encoder frames (n_frames, d_enc)
    transcript: list[int]
    continuation: list[int]
    emotion: str | None = None
    stopped_at_eos: bool = False


@dataclass
class TtsPair:
    text: list[int]
    speech: SpeechTokenSequence


@dataclass
class StreamingSample:
    prompt: list[int]
    response: list[int]
    speech: SpeechTokenSequence


@dataclass
class SftRecord:
    """One Stage-3 example. Speech-input records carry encoder frames, text-input records prompt ids."""

    response: list[int]
    speech: SpeechTokenSequence
    prompt: list[int] = field(default_factory=list)
    features: np.ndarray | None = None

    @property
    def speech_input(self) -> bool:
        return self.features is not None


def alignment_pairs(model, speaker: ReferenceSpeaker, n: int, seed: int, variant: str = "semantic",
                    text_len: int = 6, cont_len: int = 5) -> list[AlignmentPair]:
    """Transcripts, their reference speech and the frozen LLM's greedy continuation.

    Continuations are computed once, up front, from the text prompt (with the
    emotion tag for the emotional variant). ``cont_len`` is the greedy budget,
    so a continuation shorter than it ended at EOS.
    """
    rng = generator(seed, "alignment", variant)
    vocab = model.vocab
    out = []
    for _ in range(n):
        words = random_words(vocab, rng, text_len)
        emotion = EMOTIONS[int(rng.integers(len(EMOTIONS)))] if variant == "emotion" else None
        if emotion is None:
            prompt = model.prompts.render(model.prompts.text, vocab, words)
        else:
            prompt = model.prompts.render(model.prompts.text_with_emotion, vocab, words, tag=emotion)
        cont = generate_continuation(prompt, cont_len, model.llm, vocab.eos)
        feats = model.encoder_stub.encode(speaker.speak(words, emotion or "neutral"), speaker.sample_rate).data
        out.append(AlignmentPair(feats, words, cont, emotion, len(cont) < cont_len))
    return out


def tts_pairs(speaker: ReferenceSpeaker, book: Codebook, n: int, seed: int, text_len: int = 6) -> list[TtsPair]:
    rng = generator(seed, "tts")
    out = []
    for _ in range(n):
        words = random_words(speaker.vocab, rng, text_len)
        out.append(TtsPair(words, speaker.tokens(words, book)))
    return out


def streaming_samples(speaker: ReferenceSpeaker, book: Codebook, n: int, seed: int,
                      prompt_len: int = 4, response_len: int = 8) -> list[StreamingSample]:
    rng = generator(seed, "streaming")
    out = []
    for _ in range(n):
        prompt = random_words(speaker.vocab, rng, prompt_len)
        response = random_words(speaker.vocab, rng, response_len)
        out.append(StreamingSample(prompt, response, speaker.tokens(response, book)))
    return out


def sft_records(model, speaker: ReferenceSpeaker, book: Codebook, n_speech: int, n_text: int, seed: int,
                prompt_len: int = 4, response_len: int = 6) -> list[SftRecord]:
    """Speech-to-speech and text-to-speech instruction records, in that order."""
    rng = generator(seed, "sft")
    out = []
    for i in range(n_speech + n_text):
        prompt = random_words(speaker.vocab, rng, prompt_len)
        response = random_words(speaker.vocab, rng, response_len)
        emotion = EMOTIONS[int(rng.integers(len(EMOTIONS)))]
        speech = speaker.tokens(response, book)
        if i < n_speech:
            feats = model.encoder_stub.encode(speaker.speak(prompt, emotion), speaker.sample_rate).data
            out.append(SftRecord(response, speech, prompt, feats))
        else:
            out.append(SftRecord(response, speech, prompt, None))
    return out
