import io
import json
import subprocess
import sys

import pytest

from behavmock import cli
from behavmock.generation import read_dataset
from behavmock.model import load_checkpoint
from behavmock.subject import ConversionError, builtin_convert
from behavmock.tokenization import Vocabulary

TINY_MODEL = ["--embedding-size", "16", "--feedforward-size", "32", "--attention-heads", "2",
              "--epochs", "1", "--batch-size", "16"]


# the built-in subject

@pytest.mark.parametrize("md,html", [
    ("**TEXT_1**\n", "<p><strong>TEXT_1</strong></p>\n"),
    ("", ""),
    ("# TEXT_1\n", "<h1>TEXT_1</h1>\n"),
    ("###### TEXT_1\n", "<h6>TEXT_1</h6>\n"),
    ("`TEXT_1`\n", "<p><code>TEXT_1</code></p>\n"),
    ("[TEXT_1](URL_1)\n", '<p><a href="URL_1">TEXT_1</a></p>\n'),
    ("*TEXT_1* _TEXT_2_\n", "<p><em>TEXT_1</em> <em>TEXT_2</em></p>\n"),
    ("TEXT_1\nTEXT_2\n", "<p>TEXT_1\nTEXT_2</p>\n"),
    ("TEXT_1\n\nTEXT_2\n", "<p>TEXT_1</p>\n<p>TEXT_2</p>\n"),
    ("# TEXT_1\nTEXT_2\n", "<h1>TEXT_1</h1>\n<p>TEXT_2</p>\n"),
])
def test_rule_table(md, html):
    assert builtin_convert(md) == html


@pytest.mark.parametrize("md", ["~~TEXT_1~~\n", "- item\n", "> quote\n", "**TEXT_1\n", "<b>x</b>\n"])
def test_out_of_subset_input_is_rejected(md):
    with pytest.raises(ConversionError) as exc:
        builtin_convert(md)
    assert exc.value.position >= 0


def test_subject_process_exit_codes():
    ok = subprocess.run([sys.executable, "-m", "behavmock.subject"], input="**TEXT_1**\n",
                        capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout == "<p><strong>TEXT_1</strong></p>\n"
    bad = subprocess.run([sys.executable, "-m", "behavmock.subject"], input="~~x~~\n",
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "position" in bad.stderr


def test_subject_convert_subcommand(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("# TEXT_1\n"))
    assert cli.main(["subject-convert"]) == 0
    assert capsys.readouterr().out == "<h1>TEXT_1</h1>\n"
    monkeypatch.setattr(sys, "stdin", io.StringIO("~~x~~\n"))
    assert cli.main(["subject-convert"]) == 1


# subcommands end to end on a small dataset

@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["collect", "--count", "60", "--seed", "4", "--out", str(d / "data")]) == 0
    return d


def test_generate(tmp_path, capsys):
    assert cli.main(["generate", "--count", "25", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert len(read_dataset(tmp_path / "inputs.jsonl")) == 25
    assert (tmp_path / "hashes.txt").read_text().count("\n") == 25
    # a second run into the same directory never repeats an input
    assert cli.main(["generate", "--count", "25", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "hashes.txt").read_text().split()) == 50


def test_collect(small):
    recs = read_dataset(small / "data")
    assert len(recs) == 60
    assert all(builtin_convert(r.input_text) == r.output_text for r in recs)


def test_tokenize(small):
    out = small / "tok"
    assert cli.main(["tokenize", "--dataset", str(small / "data"), "--out", str(out)]) == 0
    rows = [json.loads(line) for line in (out / "tokens.jsonl").read_text().splitlines()]
    assert len(rows) == 60 and set(rows[0]) == {"source", "target"}
    assert "<p>" in Vocabulary.load(out / "target.vocab")
    inv = small / "tok-inv"
    assert cli.main(["tokenize", "--dataset", str(small / "data"), "--inverse", "--out", str(inv)]) == 0
    swapped = [json.loads(line) for line in (inv / "tokens.jsonl").read_text().splitlines()]
    assert [(r["target"], r["source"]) for r in swapped] == [(r["source"], r["target"]) for r in rows]


def test_train_predict_evaluate(small, capsys):
    ckpt = small / "fwd.ckpt"
    assert cli.main(["train", "--dataset", str(small / "data"), "--out", str(ckpt)] + TINY_MODEL) == 0
    model, extra = load_checkpoint(ckpt, with_extra=True)
    assert extra == {"source_format": "markdown", "target_format": "html", "policy": "optimizing",
                     "mode": "forward"}
    assert model.config.embedding_size == 16

    src = small / "in.md"
    src.write_text("**TEXT_1**\n")
    trace = small / "trace.txt"
    out = small / "out.html"
    assert cli.main(["predict", "--checkpoint", str(ckpt), "--in", str(src), "--max-len", "3",
                     "--trace", str(trace), "--out", str(out)]) == 0
    assert "[phase 2: prediction]" in trace.read_text()
    assert "max length: 3" in trace.read_text()

    lines = small / "in.jsonl"
    lines.write_text(json.dumps("# TEXT_1\n") + "\n" + json.dumps("`TEXT_1`\n") + "\n")
    assert cli.main(["predict", "--checkpoint", str(ckpt), "--in", str(lines), "--jsonl",
                     "--validate", "--put", "builtin", "--out", str(small / "out.jsonl")]) == 0
    assert len((small / "out.jsonl").read_text().splitlines()) == 2
    assert "bleu=" in capsys.readouterr().err

    ref = small / "ref.txt"
    hyp = small / "hyp.txt"
    ref.write_text("a b c d\nx y\n")
    hyp.write_text("a b c d\nx z\n")
    report = small / "report.json"
    assert cli.main(["evaluate", "--ref", str(ref), "--hyp", str(hyp), "--tokens", "--out", str(report)]) == 0
    d = json.loads(report.read_text())
    assert d["exact_match"] == 50.0 and d["close_match"] == 50.0 and d["sample_count"] == 2


def test_train_inverse(small):
    ckpt = small / "inv.ckpt"
    assert cli.main(["train", "--dataset", str(small / "data"), "--inverse", "--out", str(ckpt)] + TINY_MODEL) == 0
    model, extra = load_checkpoint(ckpt, with_extra=True)
    assert extra["mode"] == "inverse" and extra["source_format"] == "html"
    assert "<p>" in model.src_vocab and "**" in model.tgt_vocab


def test_tune(small):
    report = small / "tune.json"
    assert cli.main(["tune", "--dataset", str(small / "data"), "--phase1-trials", "1", "--phase2-trials", "1",
                     "--phase1-epochs", "1", "--phase2-epochs", "1", "--samples", "20",
                     "--report", str(report)]) == 0
    d = json.loads(report.read_text())
    assert len(d["phase1_trials"]) == 1 and len(d["phase2_trials"]) == 1


def test_exit_codes(small, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate", "--count", "x", "--out", str(tmp_path)])
    assert exc.value.code == 1
    assert cli.main(["evaluate", "--ref", str(tmp_path / "missing"), "--hyp", str(tmp_path / "missing")]) == 2
    assert cli.main(["pipeline", "--config", str(tmp_path / "nope.ini")]) == 2
    bad = tmp_path / "bad.md"
    bad.write_text("~~TEXT_1~~\n")
    assert cli.main(["predict", "--checkpoint", str(small / "fwd.ckpt"), "--in", str(bad)]) == 2
    good = tmp_path / "good.md"
    good.write_text("# TEXT_1\n")
    failing = f'{sys.executable} -c "import sys; sys.exit(5)"'
    assert cli.main(["predict", "--checkpoint", str(small / "fwd.ckpt"), "--in", str(good),
                     "--validate", "--put", failing]) == 3
    assert "error" in capsys.readouterr().err
