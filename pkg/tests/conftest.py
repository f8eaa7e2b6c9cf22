import json
import random
import re
import time

import pytest
import torch

from behavmock import cli
from behavmock.hyperopt import TuningData
from behavmock.model import ModelConfig, TrainConfig, init_model, train
from behavmock.tokenization import build_vocabulary

torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, with the detail each test recorded."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance.py" not in rep.nodeid:
                continue
            m = re.search(r"test_criterion_(\d+)", rep.nodeid)
            if not m:
                continue
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((int(m.group(1)), outcome.upper(), detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if outcome == 'PASSED' else 'FAIL'}  {detail}")


def copy_pairs(n, seed=0, symbols=10, lo=3, hi=10):
    """Copy task: random symbol strings mapped to themselves."""
    rng = random.Random(seed)
    alphabet = [chr(97 + i) for i in range(symbols)]
    return [[rng.choice(alphabet) for _ in range(rng.randint(lo, hi))] for _ in range(n)]


@pytest.fixture(scope="session")
def copy_data():
    seqs = copy_pairs(600, seed=1)
    vocab = build_vocabulary(seqs)
    pairs = [(vocab.encode(s), vocab.encode(s)) for s in seqs]
    return TuningData(pairs, vocab, vocab)


@pytest.fixture(scope="session")
def copy_model(copy_data):
    """Toy-config model trained on the copy task, plus its history and the
    held-out pairs it never saw."""
    train_pairs, held_out = copy_data.pairs[:500], copy_data.pairs[500:]
    model = init_model(ModelConfig(dropout=0.0), copy_data.src_vocab, copy_data.tgt_vocab, seed=0)
    _, history = train(model, train_pairs, TrainConfig(epochs=20, batch_size=16, seed=0))
    return model, history, held_out


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory):
    """The bundled demo pipeline run end to end through the CLI."""
    workdir = tmp_path_factory.mktemp("demo") / "run"
    start = time.perf_counter()
    code = cli.main(["pipeline", "--config", "demo", "--workdir", str(workdir)])
    elapsed = time.perf_counter() - start
    assert code == 0
    report = json.loads((workdir / "run-report.json").read_text())
    return workdir, report, elapsed
