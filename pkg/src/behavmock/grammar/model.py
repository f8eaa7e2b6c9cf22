"""Grammar data types, the BNF file dialect, and grammar validation.

The dialect::

    %placeholders: TEXT URL
    # comment
    <start>  ::= <line> "\\n"
    <line>   ::= TEXT | TEXT " " <line> @p=0.25
               | ""

``<name>`` is a non-terminal, ``"..."`` a literal (``\\n``, ``\\t``, ``\\"``,
``\\\\`` escapes), a bare word listed under ``%placeholders`` is a placeholder
terminal, and ``""`` on its own is the empty expansion.  A trailing
``@p=<float>`` pins the probability of that alternative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..errors import (
    DanglingPlaceholder,
    GrammarSyntaxError,
    ProbabilityOverflow,
    UndefinedNonTerminal,
)

TERMINAL = "terminal"
NONTERMINAL = "non-terminal"
PLACEHOLDER = "placeholder"


@dataclass(frozen=True)
class Symbol:
    kind: str
    text: str

    @property
    def is_nonterminal(self):
        return self.kind == NONTERMINAL

    def __str__(self):
        if self.kind == TERMINAL:
            return '"' + self.text.encode("unicode_escape").decode("ascii").replace('"', '\\"') + '"'
        return self.text


@dataclass(frozen=True)
class Alternative:
    symbols: Tuple[Symbol, ...]
    probability: Optional[float] = None

    @property
    def is_empty(self):
        return len(self.symbols) == 0

    def nonterminals(self):
        return [s.text for s in self.symbols if s.kind == NONTERMINAL]

    def __str__(self):
        body = " ".join(str(s) for s in self.symbols) if self.symbols else '""'
        if self.probability is not None:
            body += f" @p={self.probability:g}"
        return body


class Grammar:
    """A context-free grammar with optional per-alternative probabilities.

    Construction does not validate; call :func:`validate_grammar` (or
    :meth:`validate`) before generating from or parsing with it.
    """

    def __init__(self, start_symbol: str, rules: Mapping[str, Sequence[Alternative]],
                 placeholders: Iterable[str] = ()):
        self.start_symbol = start_symbol
        self.rules: Dict[str, Tuple[Alternative, ...]] = {k: tuple(v) for k, v in rules.items()}
        self.placeholders = tuple(dict.fromkeys(placeholders))

    def __repr__(self):
        return f"Grammar(start={self.start_symbol!r}, rules={len(self.rules)}, placeholders={list(self.placeholders)})"

    def __eq__(self, other):
        if not isinstance(other, Grammar):
            return NotImplemented
        return (self.start_symbol, self.rules, self.placeholders) == (
            other.start_symbol, other.rules, other.placeholders)

    __hash__ = None

    def validate(self):
        validate_grammar(self)
        return self

    def to_bnf(self):
        lines = []
        if self.placeholders:
            lines.append("%placeholders: " + " ".join(self.placeholders))
        order = [self.start_symbol] + [k for k in self.rules if k != self.start_symbol]
        for name in order:
            alts = " | ".join(str(a) for a in self.rules[name])
            lines.append(f"{name} ::= {alts}")
        return "\n".join(lines) + "\n"

    @cached_property
    def effective_probabilities(self) -> Dict[str, Tuple[float, ...]]:
        """Explicit probabilities are kept; the remainder is split equally
        among the unassigned alternatives of the rule."""
        out = {}
        for name, alts in self.rules.items():
            fixed = sum(a.probability for a in alts if a.probability is not None)
            free = [a for a in alts if a.probability is None]
            share = max(0.0, 1.0 - fixed) / len(free) if free else 0.0
            out[name] = tuple(a.probability if a.probability is not None else share for a in alts)
        return out

    @cached_property
    def min_costs(self) -> Dict[str, float]:
        """Fewest non-terminal expansions needed to fully derive each
        non-terminal (counting its own expansion); inf if it cannot terminate."""
        cost = {name: math.inf for name in self.rules}
        changed = True
        while changed:
            changed = False
            for name, alts in self.rules.items():
                best = min((1 + sum(cost.get(n, math.inf) for n in a.nonterminals()) for a in alts),
                           default=math.inf)
                if best < cost[name]:
                    cost[name] = best
                    changed = True
        return cost

    @cached_property
    def max_costs(self) -> Dict[str, float]:
        """Most expansions any finite derivation of a non-terminal can use;
        inf for non-terminals that reach a productive cycle."""
        memo: Dict[str, float] = {}
        on_stack = set()
        min_cost = self.min_costs

        def visit(name):
            if name in memo:
                return memo[name]
            if name in on_stack:
                return math.inf
            on_stack.add(name)
            best = 0.0
            for alt in self.rules[name]:
                nts = alt.nonterminals()
                if any(min_cost.get(n, math.inf) == math.inf for n in nts):
                    continue
                best = max(best, 1 + sum(visit(n) for n in nts))
            on_stack.discard(name)
            memo[name] = best
            return best

        for name in self.rules:
            if min_cost[name] < math.inf:
                visit(name)
            else:
                memo[name] = 0.0
        return memo

    def alternative_min_cost(self, alt: Alternative) -> float:
        return sum(self.min_costs[n] for n in alt.nonterminals())

    def alternative_max_cost(self, alt: Alternative) -> float:
        return sum(self.max_costs[n] for n in alt.nonterminals())


def validate_grammar(g: Grammar) -> None:
    """Raise unless every grammar invariant holds."""
    if g.start_symbol not in g.rules:
        raise UndefinedNonTerminal(g.start_symbol)
    used_placeholders = set()
    declared = set(g.placeholders)
    for name, alts in g.rules.items():
        if not alts:
            raise GrammarSyntaxError(f"rule {name} has no alternatives")
        total = 0.0
        for alt in alts:
            if alt.probability is not None:
                if not 0.0 < alt.probability <= 1.0:
                    raise ProbabilityOverflow(name, alt.probability)
                total += alt.probability
            for sym in alt.symbols:
                if sym.kind == NONTERMINAL and sym.text not in g.rules:
                    raise UndefinedNonTerminal(sym.text)
                if sym.kind == PLACEHOLDER:
                    if sym.text not in declared:
                        raise GrammarSyntaxError(f"placeholder {sym.text} is not declared")
                    used_placeholders.add(sym.text)
        if total > 1.0 + 1e-9:
            raise ProbabilityOverflow(name, total)
    for name in g.placeholders:
        if name not in used_placeholders:
            raise DanglingPlaceholder(name)


# --- file dialect -----------------------------------------------------------

_TOKEN_RE = re.compile(r'''
    (?P<nt><[^<>\s]+>)
  | (?P<lit>"(?:[^"\\]|\\.)*")
  | (?P<prob>@p=(?P<pval>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))
  | (?P<bar>\|)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ws>\s+)
''', re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


def _unescape(body: str, lineno: int) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            if i + 1 >= len(body) or body[i + 1] not in _ESCAPES:
                raise GrammarSyntaxError(f"bad escape in literal {body!r}", lineno)
            out.append(_ESCAPES[body[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _parse_alternatives(text: str, placeholders, lineno: int) -> List[Alternative]:
    alts: List[Alternative] = []
    symbols: List[Symbol] = []
    prob = None
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise GrammarSyntaxError(f"unexpected text {text[pos:pos + 20]!r}", lineno)
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bar":
            alts.append(Alternative(tuple(symbols), prob))
            symbols, prob = [], None
        elif kind == "prob":
            prob = float(m.group("pval"))
        elif kind == "nt":
            symbols.append(Symbol(NONTERMINAL, m.group("nt")))
        elif kind == "lit":
            value = _unescape(m.group("lit")[1:-1], lineno)
            if value:   # "" is the empty expansion
                symbols.append(Symbol(TERMINAL, value))
        elif kind == "word":
            word = m.group("word")
            if word not in placeholders:
                raise GrammarSyntaxError(f"bare word {word!r} is not a declared placeholder", lineno)
            symbols.append(Symbol(PLACEHOLDER, word))
    if not text.strip():
        raise GrammarSyntaxError("rule has no alternatives", lineno)
    alts.append(Alternative(tuple(symbols), prob))
    return alts


def parse_grammar(text: str, start_symbol: Optional[str] = None) -> Grammar:
    """Parse the BNF dialect.  The start symbol defaults to the first rule."""
    placeholders: List[str] = []
    rules: Dict[str, List[Alternative]] = {}
    current = None
    pending: List[Tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("%placeholders:"):
            placeholders.extend(stripped.split(":", 1)[1].split())
            continue
        if "::=" in line and re.match(r"\s*<[^<>\s]+>\s*::=", line):
            lhs, rhs = line.split("::=", 1)
            current = lhs.strip()
            if current in rules or any(p[0] == current for p in pending):
                raise GrammarSyntaxError(f"duplicate rule {current}", lineno)
            pending.append((current, rhs, lineno))
        elif stripped.startswith("|") and current is not None:
            name, rhs, first = pending[-1]
            pending[-1] = (name, rhs + " " + stripped, first)
        else:
            raise GrammarSyntaxError(f"cannot parse line {stripped!r}", lineno)
    if not pending:
        raise GrammarSyntaxError("grammar has no rules")
    for name, rhs, lineno in pending:
        rules[name] = _parse_alternatives(rhs, set(placeholders), lineno)
    return Grammar(start_symbol or pending[0][0], rules, placeholders)


def load_grammar(path, start_symbol: Optional[str] = None) -> Grammar:
    return parse_grammar(Path(path).read_text(encoding="utf-8"), start_symbol)
