import sys

import pytest
import torch

from behavmock.deployment import (
    UNK_SENTINEL,
    DeploymentSession,
    content_tokens,
    predict,
    predict_many,
    validate_forward,
    validate_inverse,
)
from behavmock.errors import ConfigInvalid, PutTimeout, TokenizeFailure, UnboundPlaceholder
from behavmock.generation import read_dataset
from behavmock.model import load_checkpoint, save_checkpoint
from behavmock.tokenization import UNK_ID

BOLD = "**TEXT_1**\n"


@pytest.fixture(scope="module")
def forward(demo_run):
    workdir, _, _ = demo_run
    return DeploymentSession.from_checkpoint(workdir / "forward.ckpt", put="builtin")


@pytest.fixture(scope="module")
def inverse(demo_run):
    workdir, _, _ = demo_run
    return DeploymentSession.from_checkpoint(workdir / "inverse.ckpt", put="builtin")


def biased(demo_run, token_id):
    """A fresh forward model whose output layer always prefers ``token_id``."""
    workdir, _, _ = demo_run
    model = load_checkpoint(workdir / "forward.ckpt")
    with torch.no_grad():
        model.net.generator.bias[token_id] = 1e4
    return DeploymentSession(model, "markdown", "html", put="builtin")


def test_bold_example(demo_run, forward):
    workdir, _, _ = demo_run
    explicit = DeploymentSession.from_checkpoint(workdir / "forward.ckpt", max_len=7)
    out, trace = predict(explicit, BOLD)
    assert out == "<p><strong>TEXT_1</strong></p>\n"
    assert not trace.truncated
    # the default cap, ceil(1.25 * 4) = 5, stops one token short and says so
    out, trace = predict(forward, BOLD)
    assert trace.input_tokens == ["**", "TEXT_1", "**", "\n"]
    assert trace.max_len == 5 and len(trace.predicted_ids) == 5
    assert trace.truncated
    assert out == "<p><strong>TEXT_1</strong></p>"


def test_empty_input_fails_before_prediction(forward):
    with pytest.raises(ValueError):
        predict(forward, "")
    with pytest.raises(TokenizeFailure):
        predict(forward, "~~TEXT_1~~\n")


def test_trace_phases(demo_run, forward):
    workdir, _, _ = demo_run
    texts = [r.input_text for r in read_dataset(workdir / "test.jsonl")[:30]]
    for text, (out, trace) in zip(texts, predict_many(forward, texts)):
        tok = forward.source_tokenizer
        assert tok.reconstruct(trace.input_tokens, trace.placeholder_map) == text
        assert trace.source_ids == forward.model.src_vocab.encode(trace.input_tokens)
        assert len(trace.predicted_ids) <= trace.max_len
        assert trace.output == out
    dump = trace.to_text()
    for label in ("[phase 1: tokenization]", "[phase 2: prediction]", "[phase 3: reconstruction]"):
        assert label in dump


def test_predict_many_matches_predict(demo_run, forward):
    workdir, _, _ = demo_run
    texts = [r.input_text for r in read_dataset(workdir / "test.jsonl")[:10]]
    assert [o for o, _ in predict_many(forward, texts)] == [predict(forward, t)[0] for t in texts]


def test_validate_forward(forward):
    perfect = validate_forward(forward, BOLD, "<p><strong>TEXT_1</strong></p>\n")
    assert perfect.exact_match == 100.0 and perfect.mean_levenshtein == 0 and perfect.bleu == 1.0
    extra = validate_forward(forward, BOLD, "<p><strong>TEXT_1</strong></p>\n\n")
    assert extra.exact_match == 0.0 and extra.close_match == 100.0
    assert extra.wer > 0


def test_validate_forward_timeout(forward):
    slow = DeploymentSession(forward.model, "markdown", "html",
                             put=[sys.executable, "-c", "import time; time.sleep(5)"], timeout=0.2)
    with pytest.raises(PutTimeout):
        validate_forward(slow, BOLD, "<p>x</p>\n")


def test_validate_inverse(inverse):
    original = "<p><em>TEXT_1</em></p>\n"
    verdict = validate_inverse(inverse, original, "*TEXT_1*\n")
    assert not verdict.rejected and verdict.report.bleu == 1.0
    # a different but equivalent input is judged on its output alone
    verdict = validate_inverse(inverse, original, "_TEXT_1_\n")
    assert not verdict.rejected and verdict.report.mean_levenshtein == 0
    verdict = validate_inverse(inverse, original, "~~TEXT_1~~\n")
    assert verdict.rejected and verdict.report is None and verdict.reason


def test_validation_needs_put(demo_run):
    workdir, _, _ = demo_run
    session = DeploymentSession.from_checkpoint(workdir / "forward.ckpt")
    with pytest.raises(ConfigInvalid):
        validate_forward(session, BOLD, BOLD)
    with pytest.raises(ConfigInvalid):
        validate_inverse(session, BOLD, BOLD)


def test_forward_inverse_symmetry(demo_run, forward, inverse):
    workdir, _, _ = demo_run
    outputs = [r.output_text for r in read_dataset(workdir / "test.jsonl")[:100]]
    inputs = [x for x, _ in predict_many(inverse, outputs)]
    ok = 0
    for y, x in zip(outputs, inputs):
        try:
            again, _ = predict(forward, x)
        except TokenizeFailure:
            continue
        tok = forward.target_tokenizer
        ok += content_tokens(tok, again) == content_tokens(tok, y)
    assert ok >= 85


def test_unknown_tokens_become_visible_sentinels(demo_run):
    session = biased(demo_run, UNK_ID)
    session.max_len = 2
    out, trace = predict(session, BOLD)
    assert trace.predicted_ids == [UNK_ID, UNK_ID] and trace.truncated
    assert out == UNK_SENTINEL * 2


def test_unbound_placeholder(demo_run, forward):
    session = biased(demo_run, forward.model.tgt_vocab.id("TEXT_5"))
    session.max_len = 1
    out, trace = predict(session, BOLD)
    assert out == "TEXT_5" and trace.unbound == ["TEXT_5"]
    with pytest.raises(UnboundPlaceholder):
        predict(session, BOLD, strict=True)


def test_coverage_probe_and_mode(demo_run, tmp_path):
    workdir, _, _ = demo_run
    model = load_checkpoint(workdir / "forward.ckpt")
    with pytest.raises(ConfigInvalid):
        DeploymentSession(model, "html", "markdown")
    with pytest.raises(ConfigInvalid):
        DeploymentSession(model, "markdown", "html", mode="sideways")
    save_checkpoint(model, tmp_path / "bare.ckpt")
    with pytest.raises(ConfigInvalid):
        DeploymentSession.from_checkpoint(tmp_path / "bare.ckpt")


def test_content_tokens_fallback(forward):
    tok = forward.target_tokenizer
    assert content_tokens(tok, "<p>hello <em>x</em></p>") == ["<p>", "hello", "<em>", "x", "</em>", "</p>"]
    assert content_tokens(tok, "<p>broken") == ["<p>", "broken"]
