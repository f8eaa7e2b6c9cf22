"""Sequence similarity metrics over token sequences.

All functions take token sequences (lists of strings or any hashable items).
Corpus-level functions take parallel lists with one reference per
hypothesis.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Hashable, List, Sequence, Tuple

import numpy as np

from .errors import EmptyCorpus, EmptyReference, TooFewSamples

Tokens = Sequence[Hashable]

SMOOTHING_EPSILON = 1e-9

# alignment operations
MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


def _distance_table(a: Tokens, b: Tokens) -> List[List[int]]:
    m = len(b)
    d = [list(range(m + 1))]
    for i, x in enumerate(a, 1):
        prev = d[-1]
        row = [i]
        for j, y in enumerate(b, 1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (x != y)))
        d.append(row)
    return d


def levenshtein(a: Tokens, b: Tokens) -> int:
    """Minimal number of insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def align(reference: Tokens, hypothesis: Tokens) -> List[Tuple[str, int, int]]:
    """One minimal alignment as ``(op, ref_index, hyp_index)`` triples.

    The traceback runs from the end and prefers match, then substitution,
    then deletion, then insertion among the moves that stay optimal.
    Index -1 marks the missing side of an insertion or deletion.
    """
    d = _distance_table(reference, hypothesis)
    i, j = len(reference), len(hypothesis)
    ops = []
    while i > 0 or j > 0:
        here = d[i][j]
        if i > 0 and j > 0 and reference[i - 1] == hypothesis[j - 1] and d[i - 1][j - 1] == here:
            ops.append((MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i - 1][j - 1] + 1 == here:
            ops.append((SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i - 1][j] + 1 == here:
            ops.append((DEL, i - 1, -1))
            i -= 1
        else:
            ops.append((INS, -1, j - 1))
            j -= 1
    ops.reverse()
    return ops


def alignment_counts(reference: Tokens, hypothesis: Tokens):
    """``(hits, substitutions, deletions, insertions)`` of :func:`align`."""
    c = Counter(op for op, _, _ in align(reference, hypothesis))
    return c[MATCH], c[SUB], c[DEL], c[INS]


def _ngrams(seq: Tokens, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def _check_corpus(references, hypotheses):
    if len(references) != len(hypotheses):
        raise ValueError(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    if not references:
        raise EmptyCorpus("empty corpus")


def _bleu_stats(reference: Tokens, hypothesis: Tokens, max_order: int):
    matches, totals = [], []
    for n in range(1, max_order + 1):
        hyp = _ngrams(hypothesis, n)
        overlap = hyp & _ngrams(reference, n)
        matches.append(sum(overlap.values()))
        totals.append(max(len(hypothesis) - n + 1, 0))
    return matches, totals


def _brevity_penalty(ref_len: int, hyp_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    if hyp_len < ref_len:
        return math.exp(1.0 - ref_len / hyp_len)
    return 1.0


def corpus_bleu(references: Sequence[Tokens], hypotheses: Sequence[Tokens], max_order: int = 4) -> float:
    """Corpus BLEU in [0, 1]: pooled modified n-gram precisions, geometric
    mean, times the brevity penalty."""
    _check_corpus(references, hypotheses)
    matches = [0] * max_order
    totals = [0] * max_order
    ref_len = hyp_len = 0
    for ref, hyp in zip(references, hypotheses):
        m, t = _bleu_stats(ref, hyp, max_order)
        for k in range(max_order):
            matches[k] += m[k]
            totals[k] += t[k]
        ref_len += len(ref)
        hyp_len += len(hyp)
    if min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    return _brevity_penalty(ref_len, hyp_len) * math.exp(log_p)


def sentence_bleu(reference: Tokens, hypothesis: Tokens, max_order: int = 4,
                  epsilon: float = SMOOTHING_EPSILON) -> float:
    """Sentence BLEU where zero match counts are replaced by ``epsilon``."""
    m, t = _bleu_stats(reference, hypothesis, max_order)
    log_p = 0.0
    for k in range(max_order):
        num = m[k] if m[k] > 0 else epsilon
        log_p += math.log(num / max(t[k], 1))
    return _brevity_penalty(len(reference), len(hypothesis)) * math.exp(log_p / max_order)


def standard_error(values: Sequence[float]) -> float:
    """Population standard deviation divided by sqrt(n)."""
    if len(values) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(values)}")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.std() / math.sqrt(len(arr)))


def bleu_std_error(references: Sequence[Tokens], hypotheses: Sequence[Tokens]) -> float:
    """Standard error of the mean of per-sample sentence-BLEU values."""
    if len(references) != len(hypotheses):
        raise ValueError("references and hypotheses differ in length")
    return standard_error([sentence_bleu(r, h) for r, h in zip(references, hypotheses)])


def nist_length_penalty(ref_len: int, hyp_len: int) -> float:
    ratio = hyp_len / ref_len if ref_len else 0.0
    if 0.0 < ratio < 1.0:
        beta = math.log(0.5) / math.log(1.5) ** 2
        return math.exp(beta * math.log(ratio) ** 2)
    return max(min(ratio, 1.0), 0.0)


def nist_score(references: Sequence[Tokens], hypotheses: Sequence[Tokens], max_order: int = 5) -> float:
    """NIST score: information-weighted n-gram precision with the NIST
    brevity factor.  Orders with no hypothesis n-grams contribute 0."""
    _check_corpus(references, hypotheses)
    freq: Counter = Counter()
    total_ref_words = 0
    for ref in references:
        for n in range(1, max_order + 1):
            freq.update(_ngrams(ref, n))
        total_ref_words += len(ref)
    info = {}
    for gram, count in freq.items():
        prefix = gram[:-1]
        numerator = freq[prefix] if prefix else total_ref_words
        info[gram] = math.log2(numerator / count)

    score = 0.0
    for n in range(1, max_order + 1):
        num = 0.0
        den = 0
        for ref, hyp in zip(references, hypotheses):
            hyp_grams = _ngrams(hyp, n)
            overlap = hyp_grams & _ngrams(ref, n)
            num += sum(info[g] * c for g, c in overlap.items())
            den += sum(hyp_grams.values())
        if den:
            score += num / den
    ref_len = sum(len(r) for r in references)
    hyp_len = sum(len(h) for h in hypotheses)
    return score * nist_length_penalty(ref_len, hyp_len)


def wer(reference: Tokens, hypothesis: Tokens) -> float:
    """Word (token) error rate in percent; may exceed 100."""
    if not reference:
        raise EmptyReference("word error rate needs a non-empty reference")
    return 100.0 * levenshtein(reference, hypothesis) / len(reference)


def _wil_from_counts(hits: int, n_ref: int, n_hyp: int) -> float:
    if n_hyp == 0:
        return 100.0
    return 100.0 * (1.0 - (hits / n_ref) * (hits / n_hyp))


def wil(reference: Tokens, hypothesis: Tokens) -> float:
    """Word information lost in percent, from the :func:`align` hit count."""
    if not reference:
        raise EmptyReference("word information lost needs a non-empty reference")
    hits = alignment_counts(reference, hypothesis)[0]
    return _wil_from_counts(hits, len(reference), len(hypothesis))


def match_rates(references: Sequence[Tokens], hypotheses: Sequence[Tokens]):
    """Percent of samples at distance 0 (exact) and exactly 1 (close)."""
    _check_corpus(references, hypotheses)
    dists = [levenshtein(r, h) for r, h in zip(references, hypotheses)]
    n = len(dists)
    return 100.0 * dists.count(0) / n, 100.0 * dists.count(1) / n


@dataclass
class EvaluationReport:
    bleu: float
    bleu_std_error: float
    nist: float
    wer: float
    wil: float
    exact_match: float
    close_match: float
    sample_count: int
    mean_levenshtein: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    def save(self, path):
        """Write ``<path>.json`` style JSON when the suffix is .json, else the
        flat key=value form."""
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        else:
            path.write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            return cls(**json.loads(text))
        fields = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                fields[k] = int(v) if k == "sample_count" else float(v)
        return cls(**fields)


def evaluate(references: Sequence[Tokens], hypotheses: Sequence[Tokens]) -> EvaluationReport:
    """Full metric bundle.  WER and WIL are pooled over the corpus."""
    _check_corpus(references, hypotheses)
    if any(len(r) == 0 for r in references):
        raise EmptyReference("every reference must be non-empty")
    edits = hits = 0
    n_ref = n_hyp = 0
    dists = []
    for ref, hyp in zip(references, hypotheses):
        h, s, d, i = alignment_counts(ref, hyp)
        dist = s + d + i
        dists.append(dist)
        edits += dist
        hits += h
        n_ref += len(ref)
        n_hyp += len(hyp)
    n = len(references)
    std_err = bleu_std_error(references, hypotheses) if n >= 2 else 0.0
    return EvaluationReport(
        bleu=corpus_bleu(references, hypotheses),
        bleu_std_error=std_err,
        nist=nist_score(references, hypotheses),
        wer=100.0 * edits / n_ref,
        wil=_wil_from_counts(hits, n_ref, n_hyp),
        exact_match=100.0 * dists.count(0) / n,
        close_match=100.0 * dists.count(1) / n,
        sample_count=n,
        mean_levenshtein=sum(dists) / n,
    )
