"""Stage ordering, per-stage checkpoints and corpus construction for a training run."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..model import ModelConfig, S2SModel
from ..stream_core import RateConfig, ScheduleConfig
from ..tokenizer import Codebook
from . import corpora, stages
from .base_lm import pretrain_base_lm

log = logging.getLogger(__name__)

STAGE_ORDER = ("1s", "1e", "2a", "2b", "3")


class StageOrderError(RuntimeError):
    pass


@dataclass(frozen=True)
class StagePlan:
    steps: int
    lr: float

    def __post_init__(self):
        if self.steps < 0 or self.lr < 0:
            raise ValueError(f"stage plan needs steps >= 0 and lr >= 0, got {self}")


DEFAULT_PLANS = {
    "base": StagePlan(3000, 0.3),
    "1s": StagePlan(1000, 0.1),
    "1e": StagePlan(1000, 0.1),
    "2a": StagePlan(1000, 0.1),
    "2b": StagePlan(1000, 0.1),
    "3": StagePlan(1000, 0.05),
}


@dataclass(frozen=True)
class CorpusSizes:
    alignment_pairs: int = 16
    tts_pairs: int = 32
    streaming_samples: int = 16
    sft_speech: int = 16
    sft_text: int = 16
    codebook_utterances: int = 400


@dataclass
class TrainingRun:
    out_dir: Path
    model_cfg: ModelConfig = ModelConfig()
    seed: int = 0
    rates: RateConfig = RateConfig()
    sched: ScheduleConfig = ScheduleConfig()
    plans: dict = field(default_factory=lambda: dict(DEFAULT_PLANS))
    corpus: CorpusSizes = CorpusSizes()
    stage3_weights: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)

    @property
    def ckpt_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    def checkpoint_path(self, stage: str) -> Path:
        return self.ckpt_dir / f"stage_{stage}.ckpt"

    @property
    def codebook_path(self) -> Path:
        return self.ckpt_dir / "codebook.ckpt"

    @staticmethod
    def prerequisite(stage: str) -> str | None:
        if stage not in STAGE_ORDER:
            raise ValueError(f"unknown stage {stage!r}; expected one of {STAGE_ORDER}")
        i = STAGE_ORDER.index(stage)
        return STAGE_ORDER[i - 1] if i else None

    def new_model(self) -> S2SModel:
        return S2SModel(self.model_cfg, self.seed, self.rates)

    def base_model(self) -> S2SModel:
        """Fresh components around a text-pretrained LLM (trained once, then cached)."""
        model = self.new_model()
        path = self.ckpt_dir / "base.ckpt"
        if path.exists():
            model.load(path)
            return model
        plan = self.plans["base"]
        log.info("pretraining base LLM: %d steps at lr %g", plan.steps, plan.lr)
        pretrain_base_lm(model.llm, model.vocab, plan.steps, plan.lr, self.seed)
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        model.save(path)
        return model

    def load_stage(self, stage: str) -> S2SModel:
        path = self.checkpoint_path(stage)
        if not path.exists():
            raise StageOrderError(f"missing checkpoint {path} (produced by stage {stage})")
        model = self.new_model()
        model.load(path)
        return model

    def speaker(self, model) -> corpora.ReferenceSpeaker:
        return corpora.ReferenceSpeaker(model.vocab, self.seed, self.rates.sample_rate)

    def codebook(self, speaker) -> Codebook:
        if self.codebook_path.exists():
            return Codebook.load(self.codebook_path)
        book = corpora.reference_codebook(speaker, self.model_cfg.codebook_size, self.seed,
                                          self.corpus.codebook_utterances)
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        book.save(self.codebook_path)
        return book

    def run(self, stage: str) -> stages.StageReport:
        prev = self.prerequisite(stage)
        if prev is not None and not self.checkpoint_path(prev).exists():
            raise StageOrderError(
                f"stage {stage} needs checkpoint {self.checkpoint_path(prev)}; run stage {prev} first"
            )
        model = self.load_stage(prev) if prev else self.base_model()
        speaker = self.speaker(model)
        plan = self.plans[stage]
        c = self.corpus
        if stage in ("1s", "1e"):
            variant = stages.Variant.SEMANTIC if stage == "1s" else stages.Variant.EMOTION
            pairs = corpora.alignment_pairs(model, speaker, c.alignment_pairs, self.seed, variant.value)
            report = stages.run_stage1(model, pairs, variant, plan.steps, plan.lr, self.seed)
        elif stage == "2a":
            book = self.codebook(speaker)
            pairs = corpora.tts_pairs(speaker, book, c.tts_pairs, self.seed)
            report = stages.run_stage2_offline(model, pairs, plan.steps, plan.lr, self.seed)
        elif stage == "2b":
            book = self.codebook(speaker)
            samples = corpora.streaming_samples(speaker, book, c.streaming_samples, self.seed)
            report = stages.run_stage2_streaming(model, samples, plan.steps, plan.lr, self.seed, self.sched)
        else:
            book = self.codebook(speaker)
            records = corpora.sft_records(model, speaker, book, c.sft_speech, c.sft_text, self.seed)
            tw, sw = self.stage3_weights
            report = stages.run_stage3(model, records, plan.steps, plan.lr, self.seed, self.sched, tw, sw)
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        model.save(self.checkpoint_path(stage))
        return report

    def run_all(self) -> list[stages.StageReport]:
        return [self.run(s) for s in STAGE_ORDER]
