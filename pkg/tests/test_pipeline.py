import configparser
import json
import sys

import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from behavmock.corpus import tokenize_records
from behavmock.errors import ConfigInvalid
from behavmock.estimators import BehaviorModel, MaskedTokenEncoder, check_documents
from behavmock.generation import GeneratorConfig, collect_pairs, read_dataset
from behavmock.grammar import bundled_grammar
from behavmock.model import load_checkpoint
from behavmock.pipeline import PipelineConfig, StageError, pipeline_run

SMALL = """
[pipeline]
grammar = markdown
subject = builtin
workdir = {workdir}
train_samples = 60
test_samples = 10

[generation]
master_seed = 3

[model]
embedding_size = 16
feedforward_size = 32
attention_heads = 2

[training]
epochs = {epochs}
batch_size = 16
"""


def small_config(tmp_path, epochs=1, **extra):
    parser = configparser.ConfigParser()
    parser.read_string(SMALL.format(workdir=tmp_path / "run", epochs=epochs))
    for section, values in extra.items():
        if not parser.has_section(section):
            parser.add_section(section)
        for k, v in values.items():
            parser.set(section, k, str(v))
    return PipelineConfig.from_parser(parser, str(tmp_path))


# configuration

def test_bundled_demo_config_parses():
    from importlib import resources
    text = resources.files("behavmock").joinpath("data", "demo.ini").read_text()
    cfg = PipelineConfig.from_string(text)
    assert cfg.train_samples == 2000 and cfg.test_samples == 200
    assert cfg.generation.min_expansions == 10 and cfg.generation.max_expansions == 20
    assert cfg.model.embedding_size == 64 and cfg.training.epochs <= 30


def test_missing_grammar_file(tmp_path):
    with pytest.raises(ConfigInvalid):
        PipelineConfig.from_string("[pipeline]\ngrammar = grammars/nope.bnf\n", base_dir=str(tmp_path))
    with pytest.raises(ConfigInvalid):
        PipelineConfig.load(tmp_path / "missing.ini")


def test_invalid_sections(tmp_path):
    with pytest.raises(ConfigInvalid):
        small_config(tmp_path, model={"attention_heads": 5})
    with pytest.raises(ConfigInvalid):
        small_config(tmp_path, training={"no_such_key": 1})
    with pytest.raises(ConfigInvalid):
        PipelineConfig.from_string("[model]\n[model]\n")


def test_grammar_file_path(tmp_path):
    (tmp_path / "g.bnf").write_text(bundled_grammar("markdown").to_bnf())
    cfg = PipelineConfig.from_string("[pipeline]\ngrammar = g.bnf\n", base_dir=str(tmp_path))
    assert cfg.load_grammar() == bundled_grammar("markdown")


# running and resuming

def test_pipeline_runs_and_resumes(tmp_path):
    cfg = small_config(tmp_path)
    report = pipeline_run(cfg)
    run = tmp_path / "run"
    assert list(report["stages"]) == ["generate", "tokenize", "train-forward", "train-inverse", "evaluate"]
    assert all(v.startswith("done") for v in report["stages"].values())
    for name in ("forward.ckpt", "inverse.ckpt", "report.json", "train.jsonl", "test.jsonl"):
        assert (run / name).exists()
    ev = report["evaluation"]
    assert set(ev) == {"forward", "inverse", "inverse_validation_rate"}
    assert json.loads((run / "run-report.json").read_text())["evaluation"] == ev

    train = read_dataset(run / "train.jsonl")
    test = read_dataset(run / "test.jsonl")
    assert len(train) == 60 and len(test) == 10
    assert not {r.input_hash for r in train} & {r.input_hash for r in test}

    # unchanged config: everything is skipped
    again = pipeline_run(small_config(tmp_path))
    assert set(again["stages"].values()) == {"skipped"}

    # a training change reuses the dataset and vocabularies
    changed = pipeline_run(small_config(tmp_path, epochs=2))
    assert changed["stages"]["generate"] == "skipped"
    assert changed["stages"]["tokenize"] == "skipped"
    assert changed["stages"]["train-forward"].startswith("done")
    assert read_dataset(run / "train.jsonl") == train


def test_inverse_training_uses_swapped_pairs(tmp_path):
    cfg = small_config(tmp_path)
    pipeline_run(cfg)
    run = tmp_path / "run"
    records = read_dataset(run / "train.jsonl")
    fwd_src, fwd_tgt = tokenize_records(records)
    inv_src, inv_tgt = tokenize_records(records, inverse=True)
    assert (inv_src, inv_tgt) == (fwd_tgt, fwd_src)
    fwd, inv = load_checkpoint(run / "forward.ckpt"), load_checkpoint(run / "inverse.ckpt")
    assert inv.src_vocab == fwd.tgt_vocab and inv.tgt_vocab == fwd.src_vocab


def test_failing_stage_is_tagged_and_keeps_earlier_artifacts(tmp_path):
    cfg = small_config(tmp_path)
    pipeline_run(cfg)
    run = tmp_path / "run"
    (run / "forward.ckpt").unlink()
    # the tokenize stage stays current, so training reads this broken file
    (run / "forward.src.vocab").write_text('"not-reserved"\n')
    with pytest.raises(StageError) as exc:
        pipeline_run(cfg)
    assert exc.value.stage == "train-forward"
    assert (run / "train.jsonl").exists() and (run / "inverse.ckpt").exists()


def test_failing_subject(tmp_path):
    cfg = small_config(tmp_path)
    cfg.subject = f'{sys.executable} -c "import sys; sys.exit(3)"'
    with pytest.raises(StageError) as exc:
        pipeline_run(cfg)
    assert exc.value.stage == "generate"


def test_pipeline_with_tuning(tmp_path):
    cfg = small_config(tmp_path, tuning={"enabled": "true", "phase1_trials": 1, "phase2_trials": 1,
                                         "phase1_epochs": 1, "phase2_epochs": 1, "samples": 20})
    report = pipeline_run(cfg)
    assert report["stages"]["tune"].startswith("done")
    tuned = json.loads((tmp_path / "run" / "tuning.json").read_text())
    assert load_checkpoint(tmp_path / "run" / "forward.ckpt").config.embedding_size == \
        tuned["best_model_config"]["embedding_size"]


# estimators

@pytest.fixture(scope="module")
def pairs():
    records, _ = collect_pairs(bundled_grammar("markdown"), GeneratorConfig(master_seed=8), "builtin", 80)
    return [r.input_text for r in records], [r.output_text for r in records]


def test_check_documents():
    assert check_documents(("a", "b")) == ["a", "b"]
    for bad in ("abc", [], ["a", ""], ["a", 3], 5):
        with pytest.raises(ValueError):
            check_documents(bad)


def test_encoder(pairs):
    X, _ = pairs
    enc = MaskedTokenEncoder()
    with pytest.raises(NotFittedError):
        enc.transform(X)
    ids = enc.fit_transform(X)
    assert len(ids) == len(X)
    # without a map the whitespace around fragments is gone, tokens are not
    masked = enc.inverse_transform(ids)
    assert masked[0] == "".join(enc.tokenize(X[:1])[0])
    assert enc.transform(masked) == ids
    assert clone(enc).get_params() == {"format": "markdown", "policy": "optimizing"}


def test_behavior_model(pairs, tmp_path):
    X, y = pairs
    est = BehaviorModel(embedding_size=16, feedforward_size=32, attention_heads=2, epochs=2, batch_size=16)
    assert clone(est).get_params() == est.get_params()
    est.set_params(epochs=1)
    assert est.epochs == 1
    with pytest.raises(NotFittedError):
        est.predict(X)
    with pytest.raises(NotFittedError):
        est.save(tmp_path / "m.ckpt")
    with pytest.raises(ValueError):
        est.fit(X, y[:-1])
    est.fit(X, y)
    assert len(est.history_) == 2
    preds = est.predict(X[:5])
    assert len(preds) == 5 and all(isinstance(p, str) for p in preds)
    assert 0.0 <= est.score(X[:10], y[:10]) <= 1.0
    est.partial_fit(X[:3], y[:3], epochs=1)
    assert len(est.history_) == 4
    est.save(tmp_path / "m.ckpt")
    assert load_checkpoint(tmp_path / "m.ckpt").config.embedding_size == 16
