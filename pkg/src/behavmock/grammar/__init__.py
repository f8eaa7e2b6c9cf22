"""Context-free grammars: representation, random derivation and parsing."""

from importlib import resources

from .earley import EarleyParser, earley_parse
from .generate import expand
from .model import (
    NONTERMINAL,
    PLACEHOLDER,
    TERMINAL,
    Alternative,
    Grammar,
    Symbol,
    load_grammar,
    parse_grammar,
    validate_grammar,
)
from .tree import DerivationTree, tree_to_string


def bundled_grammar(name: str = "markdown") -> Grammar:
    """Load one of the grammars shipped in ``behavmock/data``."""
    text = resources.files("behavmock").joinpath("data", f"{name}.bnf").read_text(encoding="utf-8")
    return parse_grammar(text)


__all__ = [
    "Alternative", "DerivationTree", "EarleyParser", "Grammar", "Symbol",
    "NONTERMINAL", "PLACEHOLDER", "TERMINAL",
    "bundled_grammar", "earley_parse", "expand", "load_grammar", "parse_grammar",
    "tree_to_string", "validate_grammar",
]
