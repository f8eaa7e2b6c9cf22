"""Token <-> id vocabulary with four reserved ids."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

PAD, BOS, EOS, UNK = "[PAD]", "[BOS]", "[EOS]", "[UNK]"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


class Vocabulary:
    """Immutable bijection between tokens and ids.  Unknown tokens map to UNK."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._itos: List[str] = tokens
        self._stoi: Dict[str, int] = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self._itos)

    def __contains__(self, token):
        return token in self._stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __iter__(self):
        return iter(self._itos)

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    @property
    def tokens(self) -> List[str]:
        return list(self._itos)

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self._stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> List[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self._itos[i])
        return out

    def coverage(self, tokens: Iterable[str]) -> float:
        """Fraction of ``tokens`` present in the vocabulary."""
        tokens = list(tokens)
        if not tokens:
            return 1.0
        return sum(t in self._stoi for t in tokens) / len(tokens)

    def save(self, path):
        lines = [json.dumps(t, ensure_ascii=False) for t in self._itos]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        text = Path(path).read_text(encoding="utf-8")
        return cls([json.loads(line) for line in text.splitlines() if line])

    def to_list(self):
        return list(self._itos)


def build_vocabulary(corpus: Iterable[Sequence[str]]) -> Vocabulary:
    """Reserved tokens first, then by descending frequency, ties in
    lexicographic order."""
    counts: Counter = Counter()
    seen_any = False
    for seq in corpus:
        seen_any = True
        counts.update(seq)
    if not seen_any:
        raise ValueError("corpus is empty")
    for t in RESERVED:
        counts.pop(t, None)
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + ordered)
