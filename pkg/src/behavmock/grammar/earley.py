"""Earley recognizer plus derivation-tree extraction.

The parser works on characters: literal terminals may span several
characters and placeholder terminals match either the bare name (``TEXT``) or
an augmented one (``TEXT_3``).
"""

from __future__ import annotations

import re
from typing import Dict, List, Optional, Set, Tuple

from ..errors import ParseFailure
from .model import NONTERMINAL, TERMINAL, Grammar, Symbol
from .tree import DerivationTree


def nullable_nonterminals(g: Grammar) -> Set[str]:
    nullable: Set[str] = set()
    changed = True
    while changed:
        changed = False
        for name, alts in g.rules.items():
            if name in nullable:
                continue
            for alt in alts:
                if all(s.kind == NONTERMINAL and s.text in nullable for s in alt.symbols):
                    nullable.add(name)
                    changed = True
                    break
    return nullable


class EarleyParser:
    """Reusable parser for one grammar.

    >>> from behavmock.grammar import parse_grammar
    >>> p = EarleyParser(parse_grammar('<s> ::= "a" <s> | ""'))
    >>> p.parse("aa").expansion_count()
    3
    """

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.nullable = nullable_nonterminals(grammar)
        self._placeholder_re = {
            name: re.compile(re.escape(name) + r"(?:_[0-9]+)?(?![A-Za-z0-9])")
            for name in grammar.placeholders
        }

    def _placeholder_ends(self, name: str, text: str, pos: int) -> List[int]:
        m = self._placeholder_re[name].match(text, pos)
        if not m:
            return []
        ends = [m.end()]
        if m.end() != pos + len(name):
            # the bare name is a match too when followed by the suffix
            ends.append(pos + len(name))
        return ends

    def _terminal_ends(self, sym: Symbol, text: str, pos: int) -> List[int]:
        if sym.kind == TERMINAL:
            return [pos + len(sym.text)] if text.startswith(sym.text, pos) else []
        return self._placeholder_ends(sym.text, text, pos)

    def recognize(self, text: str, start: Optional[str] = None):
        """Run the chart.  Returns ``(ends, furthest)`` where ``ends`` maps
        ``(non-terminal, origin)`` to the set of positions where a complete
        derivation of that non-terminal ends."""
        g = self.grammar
        start = start or g.start_symbol
        n = len(text)
        rules = g.rules
        nullable = self.nullable
        chart: List[List[Tuple[str, int, int, int]]] = [[] for _ in range(n + 1)]
        seen: List[Set[Tuple[str, int, int, int]]] = [set() for _ in range(n + 1)]
        waiting: List[Dict[str, List[Tuple[str, int, int, int]]]] = [dict() for _ in range(n + 1)]
        ends: Dict[Tuple[str, int], Set[int]] = {}

        def add(pos, item):
            if item not in seen[pos]:
                seen[pos].add(item)
                chart[pos].append(item)

        for ai in range(len(rules[start])):
            add(0, (start, ai, 0, 0))
        furthest = 0
        for i in range(n + 1):
            items = chart[i]
            j = 0
            while j < len(items):
                name, ai, dot, origin = items[j]
                j += 1
                symbols = rules[name][ai].symbols
                if dot == len(symbols):
                    ends.setdefault((name, origin), set()).add(i)
                    for (pn, pa, pd, po) in waiting[origin].get(name, ()):
                        add(i, (pn, pa, pd + 1, po))
                    continue
                sym = symbols[dot]
                if sym.kind == NONTERMINAL:
                    bucket = waiting[i].setdefault(sym.text, [])
                    bucket.append((name, ai, dot, origin))
                    for bi in range(len(rules[sym.text])):
                        add(i, (sym.text, bi, 0, i))
                    if sym.text in nullable:
                        add(i, (name, ai, dot + 1, origin))
                    # completions already recorded at this position
                    if i in ends.get((sym.text, i), ()):
                        add(i, (name, ai, dot + 1, origin))
                else:
                    for e in self._terminal_ends(sym, text, i):
                        if e <= n:
                            add(e, (name, ai, dot + 1, origin))
            if items:
                furthest = i
        return ends, furthest

    def parse(self, text: str, start: Optional[str] = None) -> DerivationTree:
        start = start or self.grammar.start_symbol
        ends, furthest = self.recognize(text, start)
        if len(text) not in ends.get((start, 0), ()):
            raise ParseFailure(furthest)
        return _TreeBuilder(self, text, ends).build(start, 0, len(text))


class _TreeBuilder:
    """Picks one derivation from a finished chart.

    Alternatives are tried in listed order and, inside an alternative, each
    non-terminal takes the shortest span that still lets the rest match.
    """

    def __init__(self, parser: EarleyParser, text: str, ends):
        self.parser = parser
        self.text = text
        self.ends = ends
        self.memo: Dict[Tuple[str, int, int], Optional[DerivationTree]] = {}
        self.active: Set[Tuple[str, int, int]] = set()

    def build(self, name: str, s: int, e: int) -> DerivationTree:
        tree = self.derive(name, s, e)
        if tree is None:  # pragma: no cover - chart guarantees a derivation
            raise ParseFailure(s)
        return tree

    def derive(self, name: str, s: int, e: int) -> Optional[DerivationTree]:
        key = (name, s, e)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            return None
        self.active.add(key)
        result = None
        for alt in self.parser.grammar.rules[name]:
            children = self.match(alt.symbols, 0, s, e)
            if children is not None:
                result = DerivationTree(Symbol(NONTERMINAL, name), tuple(children))
                break
        self.active.discard(key)
        self.memo[key] = result
        return result

    def match(self, symbols, k: int, pos: int, e: int):
        if k == len(symbols):
            return [] if pos == e else None
        sym = symbols[k]
        if sym.kind == NONTERMINAL:
            for j in sorted(self.ends.get((sym.text, pos), ())):
                if j > e:
                    break
                sub = self.derive(sym.text, pos, j)
                if sub is None:
                    continue
                rest = self.match(symbols, k + 1, j, e)
                if rest is not None:
                    return [sub] + rest
            return None
        for j in sorted(self.parser._terminal_ends(sym, self.text, pos), reverse=True):
            if j > e:
                continue
            rest = self.match(symbols, k + 1, j, e)
            if rest is not None:
                leaf_text = sym.text if sym.kind == TERMINAL else self.text[pos:j]
                return [DerivationTree(sym, None, leaf_text)] + rest
        return None


def earley_parse(g: Grammar, text: str, start: Optional[str] = None) -> DerivationTree:
    """Parse ``text`` into a derivation tree; raises ParseFailure with the
    furthest chart position that still held items."""
    return EarleyParser(g).parse(text, start)


__all__ = ["EarleyParser", "earley_parse", "nullable_nonterminals"]
