"""Byte-level byte-pair-encoding tokenizer trained from scratch.

Used as a fallback for formats without a structural tokenizer.
"""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from ..errors import CorpusTooSmall

_PRETOKEN_RE = re.compile(r" ?\w+| ?[^\w\s]+|\s+")

Pair = Tuple[bytes, bytes]


def _pretokens(text: str) -> List[bytes]:
    return [m.group(0).encode("utf-8") for m in _PRETOKEN_RE.finditer(text)]


def _pair_counts(words: Dict[Tuple[bytes, ...], int]) -> Counter:
    pairs: Counter = Counter()
    for word, freq in words.items():
        for a, b in zip(word, word[1:]):
            pairs[(a, b)] += freq
    return pairs


def _merge_word(word: Tuple[bytes, ...], pair: Pair) -> Tuple[bytes, ...]:
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(pair[0] + pair[1])
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


class SubwordTokenizer:
    """Segments text into byte-level subwords using an ordered merge table."""

    def __init__(self, merges: Sequence[Pair]):
        self.merges: List[Pair] = list(merges)
        self.ranks = {pair: r for r, pair in enumerate(self.merges)}
        self.vocab: List[bytes] = [bytes([b]) for b in range(256)] + [a + b for a, b in self.merges]
        self._ids = {tok: i for i, tok in enumerate(self.vocab)}

    def __len__(self):
        return len(self.vocab)

    def _segment_word(self, word: bytes) -> List[bytes]:
        parts = [bytes([b]) for b in word]
        while len(parts) > 1:
            best = None
            for k in range(len(parts) - 1):
                r = self.ranks.get((parts[k], parts[k + 1]))
                if r is not None and (best is None or r < best[0]):
                    best = (r, k)
            if best is None:
                break
            k = best[1]
            parts[k:k + 2] = [parts[k] + parts[k + 1]]
        return parts

    def segment(self, text: str) -> List[bytes]:
        out: List[bytes] = []
        for word in _pretokens(text):
            out.extend(self._segment_word(word))
        return out

    def encode(self, text: str) -> List[int]:
        return [self._ids[p] for p in self.segment(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return b"".join(self.vocab[i] for i in ids).decode("utf-8", errors="replace")

    def join(self, pieces: Iterable[bytes]) -> str:
        return b"".join(pieces).decode("utf-8", errors="replace")

    def save(self, path):
        lines = [f"{a.hex()} {b.hex()}" for a, b in self.merges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")

    @classmethod
    def load(cls, path):
        merges = []
        for line in Path(path).read_text(encoding="ascii").splitlines():
            if line.strip():
                a, b = line.split()
                merges.append((bytes.fromhex(a), bytes.fromhex(b)))
        return cls(merges)


def subword_train(corpus: Iterable[str], vocab_size: int) -> SubwordTokenizer:
    """Learn merges by repeatedly merging the most frequent adjacent pair.

    Ties go to the lexicographically smallest pair.  Training stops early
    when no pair is left to merge; a corpus without a single pair raises
    CorpusTooSmall.
    """
    if vocab_size <= 256:
        raise ValueError("vocab_size must exceed the 256 byte tokens")
    words: Counter = Counter()
    for line in corpus:
        for tok in _pretokens(line):
            words[tuple(bytes([b]) for b in tok)] += 1
    merges: List[Pair] = []
    pairs = _pair_counts(words)
    if not pairs:
        raise CorpusTooSmall("corpus contains no adjacent byte pairs")
    while 256 + len(merges) < vocab_size:
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merges.append(best)
        merged: Counter = Counter()
        for word, freq in words.items():
            merged[_merge_word(word, best) if best[0] in word else word] += freq
        words = merged
        pairs = _pair_counts(words)
    return SubwordTokenizer(merges)
