"""End-to-end orchestration: generate -> collect -> tokenize -> (tune) ->
train forward -> train inverse -> evaluate.

Configuration is an INI file with named sections::

    [pipeline]    grammar, subject, workdir, formats, sample counts
    [generation]  GeneratorConfig fields
    [model]       ModelConfig fields
    [training]    TrainConfig fields
    [tuning]      enabled, trial counts and epoch budgets

Each stage writes a stamp holding a fingerprint of everything it depends
on; re-running a stage whose stamp matches is a no-op, so an interrupted
run resumes at the first incomplete stage.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .corpus import encode_pairs, tokenize_records, vocabularies
from .deployment import DeploymentSession, content_tokens, predict_many, validate_inverse
from .errors import BehavmockError, ConfigInvalid
from .generation import GeneratorConfig, SampleRecord, collect_pairs, read_dataset, write_dataset
from .grammar import Grammar, bundled_grammar, load_grammar
from .hyperopt import SearchSpace, TuningData, two_phase_search
from .metrics import evaluate
from .model import ModelConfig, TrainConfig, init_model, save_checkpoint, train
from .tokenization import MaskPolicy, Vocabulary, get_tokenizer

log = logging.getLogger(__name__)

STAGES = ("generate", "tokenize", "tune", "train-forward", "train-inverse", "evaluate")


class StageError(BehavmockError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if like is None:
        return value or None
    return value


def _section(parser, name, cls):
    """Build dataclass ``cls`` from an INI section, typed by its defaults."""
    values = {}
    for f in dataclasses.fields(cls):
        if parser.has_option(name, f.name):
            default = f.default if f.default is not dataclasses.MISSING else None
            values[f.name] = _coerce(parser.get(name, f.name), default)
    if parser.has_section(name):
        unknown = set(parser.options(name)) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigInvalid(f"[{name}] has unknown keys: {sorted(unknown)}")
    try:
        return cls(**values)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"[{name}]: {exc}") from None


@dataclass
class TuningSettings:
    enabled: bool = False
    phase1_trials: int = 25
    phase2_trials: int = 10
    phase1_epochs: int = 3
    phase2_epochs: int = 5
    samples: int = 0           # 0: tune on the whole training set


@dataclass
class PipelineConfig:
    grammar: str = "markdown"
    subject: str = "builtin"
    workdir: str = "run"
    source_format: str = "markdown"
    target_format: str = "html"
    policy: str = "optimizing"
    train_samples: int = 2000
    test_samples: int = 200
    put_timeout: float = 10.0
    generation: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    tuning: TuningSettings = field(default_factory=TuningSettings)
    base_dir: str = "."

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigInvalid(f"config file {path} does not exist")
        parser = configparser.ConfigParser()
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
        return cls.from_parser(parser, str(path.parent))

    @classmethod
    def from_string(cls, text: str, base_dir: str = ".") -> "PipelineConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigInvalid(str(exc)) from None
        return cls.from_parser(parser, base_dir)

    @classmethod
    def from_parser(cls, parser, base_dir: str) -> "PipelineConfig":
        scalars = {}
        for f in dataclasses.fields(cls):
            if f.name in ("generation", "model", "training", "tuning", "base_dir"):
                continue
            if parser.has_option("pipeline", f.name):
                scalars[f.name] = _coerce(parser.get("pipeline", f.name), f.default)
        cfg = cls(**scalars,
                  generation=_section(parser, "generation", GeneratorConfig),
                  model=_section(parser, "model", ModelConfig),
                  training=_section(parser, "training", TrainConfig),
                  tuning=_section(parser, "tuning", TuningSettings),
                  base_dir=base_dir)
        cfg.validate()
        return cfg

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def grammar_path(self) -> Optional[Path]:
        """Path of a grammar file, or None for a bundled grammar name."""
        if self.grammar.endswith(".bnf") or "/" in self.grammar:
            return self.resolve(self.grammar)
        return None

    def load_grammar(self) -> Grammar:
        path = self.grammar_path()
        return load_grammar(path) if path is not None else bundled_grammar(self.grammar)

    def validate(self):
        path = self.grammar_path()
        if path is not None and not path.is_file():
            raise ConfigInvalid(f"grammar file {path} does not exist")
        for fmt in (self.source_format, self.target_format):
            get_tokenizer(fmt)
        MaskPolicy.coerce(self.policy)
        if self.train_samples < 2 or self.test_samples < 1:
            raise ConfigInvalid("need train_samples >= 2 and test_samples >= 1")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


def _fingerprint(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


class PipelineRun:
    """Executes stages in order, skipping those whose stamp is current."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.dir = cfg.resolve(cfg.workdir)
        self.report: Dict = {"stages": {}, "artifacts": {}}
        self.executed: List[str] = []

    # -- stamps ---------------------------------------------------------------

    def _stamp_path(self, stage):
        return self.dir / f".stage-{stage}.json"

    def _current(self, stage, fp, artifacts) -> bool:
        p = self._stamp_path(stage)
        if not p.exists() or any(not (self.dir / a).exists() for a in artifacts):
            return False
        return json.loads(p.read_text()).get("fingerprint") == fp

    def _stage(self, stage, fp, artifacts, fn):
        if self._current(stage, fp, artifacts):
            log.info("stage %s is up to date", stage)
            self.report["stages"][stage] = "skipped"
            return
        t0 = time.time()
        try:
            fn()
        except Exception as exc:
            raise StageError(stage, exc) from exc
        self._stamp_path(stage).write_text(json.dumps({"fingerprint": fp}))
        self.report["stages"][stage] = f"done in {time.time() - t0:.1f}s"
        self.executed.append(stage)

    # -- stages ---------------------------------------------------------------

    def run(self) -> Dict:
        cfg = self.cfg
        self.dir.mkdir(parents=True, exist_ok=True)
        grammar_src = cfg.load_grammar().to_bnf()
        fp_gen = _fingerprint(grammar_src, cfg.subject, dataclasses.asdict(cfg.generation),
                              cfg.train_samples, cfg.test_samples)
        self._stage("generate", fp_gen, ["data/dataset.jsonl", "train.jsonl", "test.jsonl"], self._generate)

        fp_tok = _fingerprint(fp_gen, cfg.source_format, cfg.target_format, cfg.policy)
        self._stage("tokenize", fp_tok, ["forward.src.vocab", "forward.tgt.vocab"], self._tokenize)

        model_cfg, train_cfg = cfg.model, cfg.training
        fp_tune = _fingerprint(fp_tok, dataclasses.asdict(cfg.tuning), model_cfg.to_dict(), train_cfg.to_dict())
        if cfg.tuning.enabled:
            self._stage("tune", fp_tune, ["tuning.json"], self._tune)
            tuned = json.loads((self.dir / "tuning.json").read_text())
            model_cfg = ModelConfig.from_dict({**model_cfg.to_dict(), **tuned["best_model_config"]})
            train_cfg = TrainConfig.from_dict({**tuned["best_train_config"],
                                               "epochs": train_cfg.epochs,
                                               "validation_fraction": train_cfg.validation_fraction})

        fp_fwd = _fingerprint(fp_tune, model_cfg.to_dict(), train_cfg.to_dict(), "forward")
        self._stage("train-forward", fp_fwd, ["forward.ckpt"],
                    lambda: self._train(False, model_cfg, train_cfg))
        fp_inv = _fingerprint(fp_tune, model_cfg.to_dict(), train_cfg.to_dict(), "inverse")
        self._stage("train-inverse", fp_inv, ["inverse.ckpt"],
                    lambda: self._train(True, model_cfg, train_cfg))
        fp_eval = _fingerprint(fp_fwd, fp_inv)
        self._stage("evaluate", fp_eval, ["report.json"], self._evaluate)

        self.report["evaluation"] = json.loads((self.dir / "report.json").read_text())
        for name in ("data/dataset.jsonl", "train.jsonl", "test.jsonl", "forward.ckpt", "inverse.ckpt",
                     "report.json", "tuning.json"):
            if (self.dir / name).exists():
                self.report["artifacts"][name] = str(self.dir / name)
        (self.dir / "run-report.json").write_text(json.dumps(self.report, indent=2))
        return self.report

    def _generate(self):
        cfg = self.cfg
        n = cfg.train_samples + cfg.test_samples
        records, _ = collect_pairs(cfg.load_grammar(), cfg.generation, cfg.subject, n, self.dir / "data",
                                   timeout=cfg.put_timeout)
        write_dataset(records[:cfg.train_samples], self.dir / "train.jsonl")
        write_dataset(records[cfg.train_samples:], self.dir / "test.jsonl")

    def _records(self, name) -> List[SampleRecord]:
        return read_dataset(self.dir / name)

    def _tokenize(self):
        cfg = self.cfg
        src, tgt = tokenize_records(self._records("train.jsonl"), cfg.source_format, cfg.target_format, cfg.policy)
        sv, tv = vocabularies(src, tgt)
        sv.save(self.dir / "forward.src.vocab")
        tv.save(self.dir / "forward.tgt.vocab")

    def _vocabs(self, inverse: bool):
        sv = Vocabulary.load(self.dir / "forward.src.vocab")
        tv = Vocabulary.load(self.dir / "forward.tgt.vocab")
        return (tv, sv) if inverse else (sv, tv)

    def _encoded(self, inverse: bool):
        cfg = self.cfg
        src, tgt = tokenize_records(self._records("train.jsonl"), cfg.source_format, cfg.target_format,
                                    cfg.policy, inverse=inverse)
        sv, tv = self._vocabs(inverse)
        return encode_pairs(src, tgt, sv, tv), sv, tv

    def _tune(self):
        t = self.cfg.tuning
        pairs, sv, tv = self._encoded(False)
        if t.samples:
            pairs = pairs[:t.samples]
        report = two_phase_search(TuningData(pairs, sv, tv), t.phase1_trials, t.phase2_trials,
                                  self.cfg.training.seed, SearchSpace(), t.phase1_epochs, t.phase2_epochs,
                                  self.cfg.training.batch_size)
        report.save(self.dir / "tuning.json")

    def _train(self, inverse: bool, model_cfg: ModelConfig, train_cfg: TrainConfig):
        cfg = self.cfg
        pairs, sv, tv = self._encoded(inverse)
        model = init_model(model_cfg, sv, tv, train_cfg.seed)
        train(model, pairs, train_cfg)
        fmts = (cfg.target_format, cfg.source_format) if inverse else (cfg.source_format, cfg.target_format)
        save_checkpoint(model, self.dir / ("inverse.ckpt" if inverse else "forward.ckpt"), extra={
            "source_format": fmts[0], "target_format": fmts[1], "policy": MaskPolicy.coerce(cfg.policy).value,
            "mode": "inverse" if inverse else "forward"})

    def _evaluate(self):
        cfg = self.cfg
        test = self._records("test.jsonl")
        out = {}
        for mode in ("forward", "inverse"):
            session = DeploymentSession.from_checkpoint(self.dir / f"{mode}.ckpt", put=cfg.subject,
                                                        timeout=cfg.put_timeout)
            sources = [r.input_text if mode == "forward" else r.output_text for r in test]
            refs = [r.output_text if mode == "forward" else r.input_text for r in test]
            preds = [p for p, _ in predict_many(session, sources)]
            tok = session.target_tokenizer
            report = evaluate([content_tokens(tok, r) for r in refs], [content_tokens(tok, p) for p in preds])
            out[mode] = report.to_dict()
            if mode == "inverse":
                accepted = 0
                for original, predicted in zip(sources, preds):
                    verdict = validate_inverse(session, original, predicted)
                    if not verdict.rejected and verdict.report.mean_levenshtein == 0:
                        accepted += 1
                out["inverse_validation_rate"] = 100.0 * accepted / len(test)
        (self.dir / "report.json").write_text(json.dumps(out, indent=2))


def pipeline_run(cfg: PipelineConfig) -> Dict:
    """Run (or resume) the whole pipeline; returns the consolidated report."""
    return PipelineRun(cfg).run()
