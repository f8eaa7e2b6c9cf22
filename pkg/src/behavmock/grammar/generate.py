"""Random derivation of grammar sentences under expansion-count bounds."""

from __future__ import annotations

import math
import random
from typing import List

from ..errors import BudgetInfeasible
from .model import NONTERMINAL, Grammar, Symbol
from .tree import DerivationTree

_MAX_RETRIES = 64


class _Node:
    __slots__ = ("symbol", "children", "text")

    def __init__(self, symbol, text=""):
        self.symbol = symbol
        self.children = None
        self.text = text

    def freeze(self):
        if self.children is None:
            return DerivationTree(self.symbol, None, self.text)
        return DerivationTree(self.symbol, tuple(c.freeze() for c in self.children), self.text)


def check_feasible(g: Grammar, min_expansions: int, max_expansions: int):
    if not 0 < min_expansions <= max_expansions:
        raise ValueError(f"need 0 < min_expansions <= max_expansions, got [{min_expansions}, {max_expansions}]")
    lo = g.min_costs[g.start_symbol]
    hi = g.max_costs[g.start_symbol]
    if lo > max_expansions:
        raise BudgetInfeasible(f"every derivation needs at least {lo} expansions (> {max_expansions})")
    if hi < min_expansions:
        raise BudgetInfeasible(f"no derivation uses more than {hi:g} expansions (< {min_expansions})")


def _derive(g: Grammar, rng: random.Random, lo_bound: int, hi_bound: int):
    rules = g.rules
    probs = g.effective_probabilities
    min_cost = g.min_costs
    max_cost = g.max_costs

    root = _Node(Symbol(NONTERMINAL, g.start_symbol))
    open_leaves: List[_Node] = [root]
    pending_min = min_cost[g.start_symbol]
    pending_max = 0.0
    pending_inf = 0
    if math.isinf(max_cost[g.start_symbol]):
        pending_inf = 1
    else:
        pending_max = max_cost[g.start_symbol]
    count = 0

    while open_leaves:
        idx = rng.randrange(len(open_leaves))
        node = open_leaves[idx]
        open_leaves[idx] = open_leaves[-1]
        open_leaves.pop()
        name = node.symbol.text

        pending_min -= min_cost[name]
        if math.isinf(max_cost[name]):
            pending_inf -= 1
        else:
            pending_max -= max_cost[name]
        others_max = math.inf if pending_inf else pending_max

        alts = rules[name]
        weighted = []
        closing = []
        for i, alt in enumerate(alts):
            lo = count + 1 + g.alternative_min_cost(alt) + pending_min
            if lo > hi_bound:
                continue
            hi = count + 1 + g.alternative_max_cost(alt) + others_max
            closing.append((lo, i))
            if hi >= lo_bound:
                weighted.append(i)

        if weighted:
            weights = [probs[name][i] for i in weighted]
            total = sum(weights)
            if total <= 0.0:
                choice = weighted[rng.randrange(len(weighted))]
            else:
                r = rng.random() * total
                choice = weighted[-1]
                for i, w in zip(weighted, weights):
                    r -= w
                    if r < 0.0:
                        choice = i
                        break
        elif closing:
            choice = min(closing)[1]
        else:
            choice = min(range(len(alts)), key=lambda i: (g.alternative_min_cost(alts[i]), i))

        alt = alts[choice]
        count += 1
        children = []
        for sym in alt.symbols:
            child = _Node(sym, "" if sym.kind == NONTERMINAL else sym.text)
            children.append(child)
            if sym.kind == NONTERMINAL:
                open_leaves.append(child)
                pending_min += min_cost[sym.text]
                if math.isinf(max_cost[sym.text]):
                    pending_inf += 1
                else:
                    pending_max += max_cost[sym.text]
        node.children = children
    return root, count


def expand(g: Grammar, seed: int, min_expansions: int = 10, max_expansions: int = 20) -> DerivationTree:
    """Derive one random sentence tree with an expansion count in
    ``[min_expansions, max_expansions]``.

    Alternatives are drawn by their effective probabilities among those that
    keep both bounds reachable; when none does, the cheapest alternative is
    taken so the derivation closes.  Deterministic in ``seed``.
    """
    check_feasible(g, min_expansions, max_expansions)
    rng = random.Random(seed)
    for _ in range(_MAX_RETRIES):
        root, count = _derive(g, rng, min_expansions, max_expansions)
        if min_expansions <= count <= max_expansions:
            return root.freeze()
    raise BudgetInfeasible(
        f"no derivation within [{min_expansions}, {max_expansions}] found after {_MAX_RETRIES} attempts")
