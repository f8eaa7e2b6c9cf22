"""Independent reference implementations used to freeze expected values.

These are deliberately naive: recursion instead of tables, explicit loops
instead of Counters, exact fractions where possible.  They share no code
with the package.
"""

import math
import statistics
from fractions import Fraction
from functools import lru_cache

# traceback preference, lower is preferred
_RANK = {"match": 0, "sub": 1, "del": 2, "ins": 3}


def levenshtein(a, b):
    """Exponential recursion with memoization."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def preferred_alignment(ref, hyp):
    """Minimal alignment whose op sequence, read from the end, is
    lexicographically smallest under match < sub < del < ins.

    Returns the op names in left-to-right order.
    """
    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def best(i, j):
        # (cost, ranks read from the end)
        if i == 0 and j == 0:
            return (0, ())
        options = []
        if i and j:
            op = "match" if ref[i - 1] == hyp[j - 1] else "sub"
            c, seq = best(i - 1, j - 1)
            options.append((c + (op == "sub"), (_RANK[op],) + seq))
        if i:
            c, seq = best(i - 1, j)
            options.append((c + 1, (_RANK["del"],) + seq))
        if j:
            c, seq = best(i, j - 1)
            options.append((c + 1, (_RANK["ins"],) + seq))
        return min(options)

    names = {v: k for k, v in _RANK.items()}
    return [names[r] for r in reversed(best(len(ref), len(hyp))[1])]


def all_minimal_alignments(ref, hyp):
    """Every minimal-cost alignment, enumerated exhaustively (small inputs)."""
    target = levenshtein(ref, hyp)
    out = []

    def walk(i, j, cost, ops):
        if cost > target:
            return
        if i == len(ref) and j == len(hyp):
            if cost == target:
                out.append(list(ops))
            return
        if i < len(ref) and j < len(hyp):
            same = ref[i] == hyp[j]
            walk(i + 1, j + 1, cost + (not same), ops + ["match" if same else "sub"])
        if i < len(ref):
            walk(i + 1, j, cost + 1, ops + ["del"])
        if j < len(hyp):
            walk(i, j + 1, cost + 1, ops + ["ins"])

    walk(0, 0, 0, [])
    return out


def wer(ref, hyp):
    return 100.0 * levenshtein(ref, hyp) / len(ref)


def wil(ref, hyp):
    hits = preferred_alignment(ref, hyp).count("match")
    if not hyp:
        return 100.0
    return 100.0 * (1 - Fraction(hits, len(ref)) * Fraction(hits, len(hyp)))


def _grams(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def _clipped_matches(ref, hyp, n):
    hyp_grams = _grams(hyp, n)
    ref_grams = _grams(ref, n)
    total = 0
    for g in set(hyp_grams):
        total += min(hyp_grams.count(g), ref_grams.count(g))
    return total


def corpus_bleu(refs, hyps, max_order=4):
    """Worksheet BLEU: pooled clipped precisions, geometric mean, BP."""
    p = []
    for n in range(1, max_order + 1):
        num = sum(_clipped_matches(r, h, n) for r, h in zip(refs, hyps))
        den = sum(len(_grams(h, n)) for h in hyps)
        if num == 0:
            return 0.0
        p.append(Fraction(num, den))
    r = sum(len(x) for x in refs)
    c = sum(len(x) for x in hyps)
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.exp(sum(math.log(x) for x in p) / max_order)


def sentence_bleu(ref, hyp, max_order=4, eps=1e-9):
    logs = 0.0
    for n in range(1, max_order + 1):
        m = _clipped_matches(ref, hyp, n)
        t = max(len(_grams(hyp, n)), 1)
        logs += math.log((m if m else eps) / t)
    if not hyp:
        return 0.0
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return bp * math.exp(logs / max_order)


def bleu_std_error(refs, hyps):
    vals = [sentence_bleu(r, h) for r, h in zip(refs, hyps)]
    return statistics.pstdev(vals) / math.sqrt(len(vals))


def nist(refs, hyps, max_order=5):
    """NIST from its definition.

    Info(w1..wn) = log2(#(w1..wn-1) / #(w1..wn)) over the reference corpus,
    with #() of the empty prefix equal to the number of reference words.
    Score = sum_n [sum of Info over co-occurring n-grams / #system n-grams]
    times exp(beta * log^2(min(Lsys / Lref, 1))), beta chosen so that the
    factor is 0.5 at a length ratio of 2/3.
    """
    def occurrences(gram):
        k = len(gram)
        return sum(1 for r in refs for i in range(len(r) - k + 1) if tuple(r[i:i + k]) == gram)

    ref_words = sum(len(r) for r in refs)
    total = 0.0
    for n in range(1, max_order + 1):
        info_sum = 0.0
        sys_grams = 0
        for r, h in zip(refs, hyps):
            hyp_grams = _grams(h, n)
            sys_grams += len(hyp_grams)
            ref_grams = _grams(r, n)
            for g in set(hyp_grams):
                co = min(hyp_grams.count(g), ref_grams.count(g))
                if co:
                    prefix = occurrences(g[:-1]) if n > 1 else ref_words
                    info_sum += co * math.log2(prefix / occurrences(g))
        if sys_grams:
            total += info_sum / sys_grams
    l_sys = sum(len(h) for h in hyps)
    if total == 0.0 or l_sys == 0:
        return 0.0
    ratio = min(l_sys / ref_words, 1.0)
    beta = math.log(0.5) / math.log(1.5) ** 2
    return total * math.exp(beta * math.log(ratio) ** 2)


def match_rates(refs, hyps):
    d = [levenshtein(r, h) for r, h in zip(refs, hyps)]
    return 100.0 * sum(x == 0 for x in d) / len(d), 100.0 * sum(x == 1 for x in d) / len(d)


def canonical(ref, hyp):
    """Relabel symbols by first appearance in ref+hyp.

    Every metric above depends only on token equality, so pairs with the
    same canonical form share oracle values.
    """
    names = {}
    for t in tuple(ref) + tuple(hyp):
        names.setdefault(t, len(names))
    return tuple(names[t] for t in ref), tuple(names[t] for t in hyp)


def param_count(n_enc, n_dec, d, ff, vs, vt):
    """Hand count for the pre-norm encoder-decoder with tied-free embeddings."""
    attn = 4 * (d * d + d)
    ffn = d * ff + ff + ff * d + d
    norm = 2 * d
    enc_layer = attn + ffn + 2 * norm
    dec_layer = 2 * attn + ffn + 3 * norm
    return (vs * d + vt * d + n_enc * enc_layer + n_dec * dec_layer
            + 2 * norm + d * vt + vt)
