from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

from ..errors import IncompleteTree
from .model import NONTERMINAL, Symbol


@dataclass(frozen=True)
class DerivationTree:
    """One node of a derivation.

    Non-terminal nodes carry ``children`` (``None`` while unexpanded, ``()``
    for the empty expansion).  Terminal and placeholder leaves carry the
    produced ``text``.
    """

    symbol: Symbol
    children: Optional[Tuple["DerivationTree", ...]] = None
    text: str = ""

    @property
    def is_nonterminal(self):
        return self.symbol.kind == NONTERMINAL

    def iter_nodes(self) -> Iterator["DerivationTree"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if node.children:
                stack.extend(reversed(node.children))

    def expansion_count(self) -> int:
        return sum(1 for n in self.iter_nodes() if n.is_nonterminal and n.children is not None)

    def find(self, name: str) -> Optional["DerivationTree"]:
        """First node (pre-order) whose symbol text is ``name``."""
        for node in self.iter_nodes():
            if node.symbol.text == name:
                return node
        return None

    def pretty(self, indent: int = 0) -> str:
        pad = "  " * indent
        if not self.is_nonterminal:
            return f"{pad}{self.text!r}\n"
        out = [f"{pad}{self.symbol.text}\n"]
        for child in self.children or ():
            out.append(child.pretty(indent + 1))
        return "".join(out)


def tree_to_string(t: DerivationTree) -> str:
    parts = []
    stack = [t]
    while stack:
        node = stack.pop()
        if node.is_nonterminal:
            if node.children is None:
                raise IncompleteTree(f"unexpanded non-terminal {node.symbol.text}")
            stack.extend(reversed(node.children))
        else:
            parts.append(node.text)
    return "".join(parts)
