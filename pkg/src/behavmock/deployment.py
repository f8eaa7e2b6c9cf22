"""Prediction pipeline: tokenize, predict, reconstruct and (optionally)
validate against the program under test.

A session runs in ``forward`` mode (PUT input -> predicted output) or
``inverse`` mode (PUT output -> predicted input).  Inverse validation never
needs the true input: the predicted input is fed to the PUT and the
resulting output is compared with the one we started from.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import ConfigInvalid, PutFailure, PutTimeout, TokenizeFailure, UnboundPlaceholder
from .generation import PutSpec, resolve_put, run_put
from .metrics import EvaluationReport, evaluate
from .model import TranslationModel, default_max_len, greedy_decode_batch, load_checkpoint
from .tokenization import MaskPolicy, PlaceholderMap, get_tokenizer

UNK_SENTINEL = "⟨UNK⟩"   # ⟨UNK⟩

# small documents whose structural tokens must be known to a matching vocabulary
_PROBES = {
    "markdown": "# TEXT\n\n**TEXT** *TEXT* `TEXT` [TEXT](URL)\n",
    "html": '<h1>TEXT</h1>\n<p><strong>TEXT</strong> <em>TEXT</em> <code>TEXT</code> <a href="URL">TEXT</a></p>\n',
}
_FALLBACK_RE = re.compile(r"<[^>]*>|\s+|[^<\s]+")


@dataclass
class Trace:
    """Tokens seen at each phase of one prediction."""
    input_tokens: List[str] = field(default_factory=list)
    placeholder_map: Optional[PlaceholderMap] = None
    source_ids: List[int] = field(default_factory=list)
    max_len: int = 0
    predicted_ids: List[int] = field(default_factory=list)
    predicted_tokens: List[str] = field(default_factory=list)
    truncated: bool = False
    unbound: List[str] = field(default_factory=list)
    output: str = ""

    def to_text(self) -> str:
        lines = [
            "[phase 1: tokenization]",
            " ".join(map(repr, self.input_tokens)),
            "placeholder map: " + repr(self.placeholder_map.to_dict() if self.placeholder_map else {}),
            "[phase 2: prediction]",
            f"source ids: {self.source_ids}",
            f"max length: {self.max_len}",
            f"predicted ids: {self.predicted_ids}" + ("  (truncated)" if self.truncated else ""),
            "[phase 3: reconstruction]",
            " ".join(map(repr, self.predicted_tokens)),
            f"unbound placeholders: {self.unbound}",
            "output: " + repr(self.output),
        ]
        return "\n".join(lines) + "\n"


@dataclass
class InverseVerdict:
    """Outcome of inverse validation: either a rejection or a metric report."""
    rejected: bool
    report: Optional[EvaluationReport] = None
    computed_output: Optional[str] = None
    reason: str = ""


class DeploymentSession:
    def __init__(self, model: TranslationModel, source_format: str, target_format: str,
                 mode: str = "forward", put: Optional[PutSpec] = None, max_len: Optional[int] = None,
                 policy=MaskPolicy.OPTIMIZING, timeout: float = 10.0, check_coverage: bool = True):
        if mode not in ("forward", "inverse"):
            raise ConfigInvalid(f"mode must be forward or inverse, not {mode!r}")
        self.model = model
        self.source_format = source_format
        self.target_format = target_format
        self.mode = mode
        self.put = resolve_put(put) if put is not None else None
        self.max_len = max_len
        self.policy = MaskPolicy.coerce(policy)
        self.timeout = timeout
        self.source_tokenizer = get_tokenizer(source_format, self.policy)
        self.target_tokenizer = get_tokenizer(target_format, self.policy)
        if check_coverage:
            self._probe(self.source_tokenizer, model.src_vocab, "source")
            self._probe(self.target_tokenizer, model.tgt_vocab, "target")

    @staticmethod
    def _probe(tokenizer, vocab, side):
        probe = _PROBES.get(tokenizer.format_name)
        if probe is None:
            return
        structural = [t for t in tokenizer.tokenize(probe) if not tokenizer.is_placeholder(t)]
        if vocab.coverage(structural) < 0.5:
            raise ConfigInvalid(f"{side} vocabulary does not look like {tokenizer.format_name} "
                                f"(coverage {vocab.coverage(structural):.0%})")

    @classmethod
    def from_checkpoint(cls, path, mode: Optional[str] = None, put: Optional[PutSpec] = None,
                        max_len: Optional[int] = None, **kwargs):
        model, extra = load_checkpoint(path, with_extra=True)
        try:
            src, tgt = extra["source_format"], extra["target_format"]
        except KeyError:
            raise ConfigInvalid(f"{path}: checkpoint does not record its tokenizer formats") from None
        return cls(model, src, tgt, mode or extra.get("mode", "forward"), put, max_len,
                   extra.get("policy", "optimizing"), **kwargs)


def _finish(session: DeploymentSession, trace: Trace, ids: List[int], truncated: bool):
    trace.predicted_ids = list(ids)
    tokens = session.model.tgt_vocab.decode(ids)
    trace.predicted_tokens = tokens
    trace.truncated = truncated
    trace.output = session.target_tokenizer.reconstruct(tokens, trace.placeholder_map, "early",
                                                        unknown=UNK_SENTINEL, missing=trace.unbound)
    return trace.output, trace


def _prepare(session: DeploymentSession, text: str) -> Trace:
    if not text:
        raise ValueError("cannot predict from empty input")
    tokens, pmap = session.source_tokenizer.mapped_tokenize(text)
    if not tokens:
        raise ValueError("input produced no tokens")
    ids = session.model.src_vocab.encode(tokens)
    limit = session.max_len if session.max_len is not None else default_max_len(len(ids))
    return Trace(tokens, pmap, ids, limit)


def predict(session: DeploymentSession, text: str, strict: bool = False) -> Tuple[str, Trace]:
    """Predict the counterpart of ``text``.

    Placeholders the model invents (absent from the input's map) are kept
    verbatim and listed in ``trace.unbound``; with ``strict`` they raise
    UnboundPlaceholder instead.
    """
    out, trace = predict_many(session, [text])[0]
    if strict and trace.unbound:
        raise UnboundPlaceholder(trace.unbound[0])
    return out, trace


def predict_many(session: DeploymentSession, texts: Sequence[str], batch_size: int = 64):
    """Batched :func:`predict`; returns a list of ``(text, trace)``."""
    traces = [_prepare(session, t) for t in texts]
    results: List[Optional[Tuple[str, Trace]]] = [None] * len(traces)
    order = sorted(range(len(traces)), key=lambda i: len(traces[i].source_ids))
    for k in range(0, len(order), batch_size):
        idx = order[k:k + batch_size]
        decoded = greedy_decode_batch(session.model, [traces[i].source_ids for i in idx], session.max_len)
        for i, (ids, truncated) in zip(idx, decoded):
            results[i] = _finish(session, traces[i], ids, truncated)
    return results


def content_tokens(tokenizer, text: str) -> List[str]:
    """Tokens of ``text`` with placeholders replaced by their content, used
    for metric comparison.  Malformed text falls back to a lexical split."""
    try:
        tokens, pmap = tokenizer.mapped_tokenize(text)
    except TokenizeFailure:
        return _FALLBACK_RE.findall(text)
    out = []
    for tok in tokens:
        if tokenizer.is_placeholder(tok) and tok in pmap.mapping:
            out.append(pmap.mapping[tok])
        else:
            out.append(tok)
    return out


def _compare(tokenizer, reference: str, hypothesis: str) -> EvaluationReport:
    return evaluate([content_tokens(tokenizer, reference)], [content_tokens(tokenizer, hypothesis)])


def validate_forward(session: DeploymentSession, input_text: str, predicted_text: str) -> EvaluationReport:
    """Run the PUT on ``input_text`` and score ``predicted_text`` against its output."""
    if session.put is None:
        raise ConfigInvalid("validation needs a PUT")
    expected = run_put(session.put, input_text, session.timeout)
    return _compare(session.target_tokenizer, expected, predicted_text)


def validate_inverse(session: DeploymentSession, original_output: str, predicted_input: str) -> InverseVerdict:
    """Run the PUT on ``predicted_input``; a crash or timeout is a rejection,
    otherwise the fresh output is scored against ``original_output``."""
    if session.put is None:
        raise ConfigInvalid("validation needs a PUT")
    try:
        computed = run_put(session.put, predicted_input, session.timeout)
    except (PutFailure, PutTimeout) as exc:
        return InverseVerdict(True, None, None, str(exc))
    # in inverse mode the PUT output is the session's source format
    return InverseVerdict(False, _compare(session.source_tokenizer, original_output, computed), computed)
