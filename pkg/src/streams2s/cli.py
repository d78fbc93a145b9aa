"""``streams2s`` command line: datagen, train, infer, profile-latency, grad-check, stats.

Exit codes: 0 success, 1 validation error (config, flags, missing inputs or
prerequisites), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import WavFormatError, read_wav, write_wav
from .datagen import ClientError, DatagenConfig, EmptyManifestError, TagMarginals, manifest_stats, read_manifest, run_datagen
from .datagen.records import SchemaError
from .frontend import SampleRateError
from .gradsuite import run_suite
from .inference import respond_speech, speech_prompt, text_prompt, timing_trace
from .latency import simulate_pipeline
from .model import ModelConfig
from .speech_decoder import write_token_dump
from .stream_core import LatencyParams, RateConfig, ScheduleConfig, first_audio_latency
from .tokenizer import Codebook
from .training.pipeline import DEFAULT_PLANS, STAGE_ORDER, CorpusSizes, StageOrderError, StagePlan, TrainingRun

LOG_ENV = "STREAMS2S_LOG_LEVEL"
GRAD_TOLERANCE = 1e-4
LATENCY_TOLERANCE = 1e-9

log = logging.getLogger("streams2s")


class ValidationError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


@dataclass(frozen=True)
class DatagenSettings:
    n: int = 100
    seeds_per_language: int = 200
    t2s_fraction: float = 0.5
    workers: int = 1
    kinds: tuple = ("empathetic", "general", "t2s")
    languages: tuple = ("en", "zh")
    marginals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LatencyGrid:
    cost_hidden: float = 0.005
    cost_speech_token: float = 0.002
    cost_chunk_synth: float = 0.01
    m_values: tuple = (1, 2, 4, 8)
    n_values: tuple = (1, 4, 8, 16)
    chunk_values: tuple = (1, 2, 4, 8)

    @property
    def costs(self) -> LatencyParams:
        return LatencyParams(self.cost_hidden, self.cost_speech_token, self.cost_chunk_synth)


@dataclass(frozen=True)
class InferSettings:
    max_response: int = 16
    max_speech_tokens: int = 512


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    rates: RateConfig = RateConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    model: ModelConfig = ModelConfig()
    stages: dict = field(default_factory=lambda: dict(DEFAULT_PLANS))
    stage3_weights: dict = field(default_factory=lambda: {"text": 1.0, "speech": 1.0})
    corpus: CorpusSizes = CorpusSizes()
    datagen: DatagenSettings = DatagenSettings()
    latency: LatencyGrid = LatencyGrid()
    infer: InferSettings = InferSettings()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "config")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self), default=list))

    def training_run(self) -> TrainingRun:
        return TrainingRun(Path(self.out), self.model, self.seed, self.rates, self.schedule, dict(self.stages),
                           self.corpus, (self.stage3_weights["text"], self.stage3_weights["speech"]))


_NESTED = {
    "rates": RateConfig, "schedule": ScheduleConfig, "model": ModelConfig, "corpus": CorpusSizes,
    "datagen": DatagenSettings, "latency": LatencyGrid, "infer": InferSettings,
}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ValidationError(f"{path}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}"
        if cls is RunConfig and key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, where)
        elif cls is RunConfig and key == "stages":
            kwargs[key] = _stage_plans(value, where)
        elif cls is RunConfig and key == "stage3_weights":
            if not isinstance(value, dict) or set(value) != {"text", "speech"}:
                raise ValidationError(f"{where}: expected keys text and speech")
            kwargs[key] = {k: float(v) for k, v in value.items()}
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _stage_plans(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(f"{where}: expected an object")
    plans = dict(DEFAULT_PLANS)
    for name, plan in value.items():
        if name not in plans:
            raise ValidationError(f"{where}: unknown stage {name!r}; expected one of {sorted(plans)}")
        plans[name] = _build(StagePlan, plan, f"{where}.{name}")
    return plans


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "n", None) is not None:
        if args.n < 0:
            raise ValidationError(f"--n must be >= 0, got {args.n}")
        changes["datagen"] = dataclasses.replace(cfg.datagen, n=args.n)
    for key, value in changes.items():
        shown = value.n if key == "datagen" else value
        before = cfg.datagen.n if key == "datagen" else getattr(cfg, key)
        log.info("override %s: %s -> %s", "datagen.n" if key == "datagen" else key, before, shown)
    return dataclasses.replace(cfg, **changes) if changes else cfg


# ---- subcommands ----

def cmd_datagen(cfg: RunConfig, args) -> int:
    d = cfg.datagen
    try:
        marginals = TagMarginals(**d.marginals) if d.marginals else TagMarginals()
        dg = DatagenConfig(d.n, cfg.seed, tuple(d.languages), tuple(d.kinds), d.seeds_per_language,
                           d.t2s_fraction, d.workers, marginals)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"datagen settings: {exc}") from None
    out = Path(cfg.out) / "datagen"
    try:
        result = run_datagen(dg, out)
    except ClientError as exc:
        raise RuntimeFailure(f"datagen stage {exc.stage} failed on record {exc.record_id}: {exc}") from None
    log.info("datagen wrote %d records and %d seeds to %s", len(result.records), len(result.seeds), out)
    summary = {"records": len(result.records), "seeds": len(result.seeds), "manifest": str(out / "manifest.jsonl")}
    if result.stats is not None:
        summary["stats"] = result.stats.to_dict()
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    if args.stage is None:
        raise ValidationError(f"train needs --stage (one of {', '.join(STAGE_ORDER)} or all)")
    run = cfg.training_run()
    names = STAGE_ORDER if args.stage == "all" else (args.stage,)
    reports_path = Path(cfg.out) / "reports.jsonl"
    failed = False
    for name in names:
        log.info("stage %s: start", name)
        report = run.run(name)
        line = report.to_json()
        print(line)
        reports_path.parent.mkdir(parents=True, exist_ok=True)
        with open(reports_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        log.info("stage %s: saved %s", name, run.checkpoint_path(name))
        if report.freeze_violations:
            log.error("stage %s: %d frozen parameters changed", name, report.freeze_violations)
            failed = True
    return 2 if failed else 0


def cmd_infer(cfg: RunConfig, args) -> int:
    if (args.input is None) == (args.text is None):
        raise ValidationError("infer needs exactly one of --input WAV or --text 'w001 w002 ...'")
    run = cfg.training_run()
    model = run.load_stage(STAGE_ORDER[-1])
    if not run.codebook_path.exists():
        raise StageOrderError(f"missing codebook {run.codebook_path}; run stage 2a first")
    book = Codebook.load(run.codebook_path)
    if args.input is not None:
        try:
            wav = read_wav(args.input, cfg.rates.sample_rate)
        except FileNotFoundError:
            raise ValidationError(f"input WAV {args.input} not found") from None
        prompt = speech_prompt(model, wav, cfg.rates.sample_rate)
    else:
        try:
            prompt = text_prompt(model, args.text)
        except ValueError as exc:
            raise ValidationError(f"--text: {exc}") from None
    result = respond_speech(model, prompt, book, cfg.schedule, args.streaming, cfg.infer.max_response,
                            cfg.infer.max_speech_tokens)
    out = Path(cfg.out) / "infer"
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "response.wav", result.waveform, cfg.rates.sample_rate)
    write_token_dump(out / "tokens.txt", result.speech_ids)
    trace = timing_trace(len(result.text_ids), len(result.speech_ids), cfg.schedule, cfg.latency.costs)
    (out / "trace.jsonl").write_text("".join(json.dumps(t, sort_keys=True) + "\n" for t in trace), encoding="utf-8")
    print(json.dumps({
        "mode": "streaming" if args.streaming else "offline",
        "input": "speech" if args.input is not None else "text",
        "response_text": model.vocab.decode(result.text_ids),
        "speech_tokens": len(result.speech_ids),
        "samples": int(len(result.waveform)),
        "chunks": len(result.chunk_spans),
        "wav": str(out / "response.wav"),
    }, sort_keys=True))
    return 0


def cmd_profile_latency(cfg: RunConfig, args) -> int:
    grid = cfg.latency
    costs = grid.costs
    header = f"{'M':>3} {'N':>3} {'chunk':>5} {'analytic_s':>12} {'simulated_s':>12} {'cadence_s':>10}"
    print(header)
    worst = 0.0
    for m in grid.m_values:
        for n in grid.n_values:
            for c in grid.chunk_values:
                try:
                    sched = ScheduleConfig(m, n, c)
                except ValueError as exc:
                    raise ValidationError(f"latency grid: {exc}") from None
                analytic = first_audio_latency(sched, costs)
                trace = simulate_pipeline(2 * m, 2 * n + c, sched, costs)
                sim = trace.first_audio
                gaps = trace.cadence()
                cadence = float(np.mean(gaps)) if gaps else 0.0
                worst = max(worst, abs(analytic - sim))
                print(f"{m:>3} {n:>3} {c:>5} {analytic:>12.6f} {sim:>12.6f} {cadence:>10.6f}")
    if worst > LATENCY_TOLERANCE:
        raise RuntimeFailure(f"analytic and simulated first-audio latency differ by {worst:.3e} s")
    log.info("analytic and simulated latency agree (max |diff| %.1e s)", worst)
    return 0


def cmd_grad_check(cfg: RunConfig, args) -> int:
    rows = run_suite(cfg.seed)
    print(f"{'component':<20} {'param_err':>10} {'input_err':>10}  status")
    bad = []
    for r in rows:
        ok = r.max_error < GRAD_TOLERANCE
        print(f"{r.name:<20} {r.param_error:>10.2e} {r.input_error:>10.2e}  {'ok' if ok else 'FAIL'}")
        if not ok:
            bad.append(r.name)
    if bad:
        raise RuntimeFailure(f"gradient check failed for {', '.join(bad)}")
    return 0


def cmd_stats(cfg: RunConfig, args) -> int:
    path = Path(args.manifest) if args.manifest else Path(cfg.out) / "datagen" / "manifest.jsonl"
    if not path.exists():
        raise ValidationError(f"manifest {path} not found")
    try:
        stats = manifest_stats(read_manifest(path))
    except (EmptyManifestError, SchemaError) as exc:
        raise ValidationError(str(exc)) from None
    print(stats.to_json())
    return 0


COMMANDS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "infer": cmd_infer,
    "profile-latency": cmd_profile_latency,
    "grad-check": cmd_grad_check,
    "stats": cmd_stats,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="root seed override")
    common.add_argument("--out", help="output directory override")
    parser = _Parser(prog="streams2s", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("datagen", parents=[common], help="run the mock data factory")
    p.add_argument("--n", type=int, help="speech-input records to generate")
    p = sub.add_parser("train", parents=[common], help="run one training stage (or all, in order)")
    p.add_argument("--stage", choices=STAGE_ORDER + ("all",))
    p = sub.add_parser("infer", parents=[common], help="answer one WAV or text prompt with speech")
    p.add_argument("--input", help="16 kHz mono 16-bit WAV")
    p.add_argument("--text", help="space-separated vocabulary tokens")
    p.add_argument("--streaming", action="store_true", help="interleaved streaming decode")
    sub.add_parser("profile-latency", parents=[common], help="analytic vs simulated first-audio latency")
    sub.add_parser("grad-check", parents=[common], help="finite-difference gradient suite")
    p = sub.add_parser("stats", parents=[common], help="histograms of a manifest")
    p.add_argument("--manifest", help="manifest path (default: <out>/datagen/manifest.jsonl)")
    return parser


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "INFO").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("streams2s")
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level, logging.INFO))
    root.propagate = False


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except (ValidationError, StageOrderError, WavFormatError, SampleRateError) as exc:
        log.error("%s", exc)
        return 1
    except RuntimeFailure as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # anything unexpected is a runtime failure, not a crash
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
