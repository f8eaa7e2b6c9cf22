"""Structural tokenizers with placeholder masking, vocabularies and a
byte-pair-encoding fallback."""

from typing import Optional, Sequence

from .bpe import SubwordTokenizer, subword_train
from .html import HTMLTokenizer
from .markdown import MarkdownTokenizer, lex_markdown
from .masking import DEFAULT_PLACEHOLDERS, MaskedTokenizer, MaskPolicy, Occurrence, PlaceholderMap
from .vocab import (
    BOS,
    BOS_ID,
    EOS,
    EOS_ID,
    PAD,
    PAD_ID,
    RESERVED,
    UNK,
    UNK_ID,
    Vocabulary,
    build_vocabulary,
)

TOKENIZERS = {
    "markdown": MarkdownTokenizer,
    "html": HTMLTokenizer,
}


def get_tokenizer(fmt: str, policy=MaskPolicy.OPTIMIZING,
                  placeholders: Sequence[str] = DEFAULT_PLACEHOLDERS) -> MaskedTokenizer:
    try:
        cls = TOKENIZERS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; known: {sorted(TOKENIZERS)}") from None
    return cls(policy, placeholders)


def mapped_tokenize(text: str, fmt: str, policy=MaskPolicy.OPTIMIZING):
    return get_tokenizer(fmt, policy).mapped_tokenize(text)


def reconstruct(tokens, pmap: Optional[PlaceholderMap] = None, instantiation: str = "early",
                fmt: str = "html", policy=None) -> str:
    policy = policy if policy is not None else (pmap.policy if pmap is not None else MaskPolicy.OPTIMIZING)
    return get_tokenizer(fmt, policy).reconstruct(tokens, pmap, instantiation)


__all__ = [
    "BOS", "BOS_ID", "DEFAULT_PLACEHOLDERS", "EOS", "EOS_ID", "HTMLTokenizer", "MarkdownTokenizer",
    "MaskPolicy", "MaskedTokenizer", "Occurrence", "PAD", "PAD_ID", "PlaceholderMap", "RESERVED",
    "SubwordTokenizer", "TOKENIZERS", "UNK", "UNK_ID", "Vocabulary", "build_vocabulary",
    "get_tokenizer", "lex_markdown", "mapped_tokenize", "reconstruct", "subword_train",
]
