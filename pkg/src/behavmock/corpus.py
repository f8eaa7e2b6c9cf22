"""Turning collected records into token and id sequences."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .generation import SampleRecord
from .tokenization import MaskPolicy, Vocabulary, build_vocabulary, get_tokenizer

TokenPairs = Tuple[List[List[str]], List[List[str]]]


def tokenize_texts(texts: Sequence[str], fmt: str, policy=MaskPolicy.OPTIMIZING) -> List[List[str]]:
    tok = get_tokenizer(fmt, policy)
    return [tok.tokenize(t) for t in texts]


def tokenize_records(records: Sequence[SampleRecord], source_format: str = "markdown",
                     target_format: str = "html", policy=MaskPolicy.OPTIMIZING,
                     inverse: bool = False) -> TokenPairs:
    """Token sequences of (input, output); ``inverse`` swaps the columns
    so that outputs become sources."""
    inputs = tokenize_texts([r.input_text for r in records], source_format, policy)
    outputs = tokenize_texts([r.output_text for r in records], target_format, policy)
    return (outputs, inputs) if inverse else (inputs, outputs)


def encode_pairs(sources: Sequence[Sequence[str]], targets: Sequence[Sequence[str]],
                 src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    return [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in zip(sources, targets)]


def vocabularies(sources, targets, src_vocab: Optional[Vocabulary] = None,
                 tgt_vocab: Optional[Vocabulary] = None):
    return (src_vocab or build_vocabulary(sources), tgt_vocab or build_vocabulary(targets))
