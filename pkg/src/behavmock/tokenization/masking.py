"""Mapped tokenization: content fragments become placeholder tokens and a
:class:`PlaceholderMap` remembers what they stood for."""

from __future__ import annotations

import enum
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..errors import UnboundPlaceholder

DEFAULT_PLACEHOLDERS = ("TEXT", "URL")


class MaskPolicy(enum.Enum):
    SIMPLIFIED = "simplified"
    OPTIMIZING = "optimizing"
    EXHAUSTIVE = "exhaustive"

    @classmethod
    def coerce(cls, value) -> "MaskPolicy":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass
class Occurrence:
    token: str      # placeholder token as emitted
    content: str    # trimmed content it stands for
    lead: str = ""
    trail: str = ""


@dataclass
class PlaceholderMap:
    """Placeholder token -> content, plus every occurrence in order.

    ``mapping`` is empty under SIMPLIFIED; reconstruction then pairs bare
    placeholders with ``occurrences`` first-in-first-out per placeholder name.
    """

    policy: MaskPolicy = MaskPolicy.OPTIMIZING
    mapping: Dict[str, str] = field(default_factory=dict)
    occurrences: List[Occurrence] = field(default_factory=list)

    def __contains__(self, token):
        return token in self.mapping

    def __getitem__(self, token):
        return self.mapping[token]

    def keys(self):
        return self.mapping.keys()

    def to_dict(self):
        return {
            "policy": self.policy.value,
            "mapping": dict(self.mapping),
            "occurrences": [[o.token, o.content, o.lead, o.trail] for o in self.occurrences],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(MaskPolicy(d["policy"]), dict(d["mapping"]),
                   [Occurrence(*o) for o in d["occurrences"]])


class _Binder:
    """Hands out content for placeholder occurrences during reconstruction."""

    def __init__(self, pmap: PlaceholderMap, base_name):
        self.pmap = pmap
        self.base_name = base_name
        self.queues: Dict[str, deque] = defaultdict(deque)
        self.paddings: Dict[str, List[Tuple[str, str]]] = defaultdict(list)
        for occ in pmap.occurrences:
            if pmap.policy is MaskPolicy.SIMPLIFIED:
                self.queues[occ.token].append(occ)
            else:
                self.paddings[occ.token].append((occ.lead, occ.trail))
        self.seen: Dict[str, int] = defaultdict(int)

    def bind(self, token: str, with_padding: bool) -> str:
        if self.pmap.policy is MaskPolicy.SIMPLIFIED:
            queue = self.queues.get(token)
            if not queue:
                raise UnboundPlaceholder(token)
            occ = queue.popleft()
            return occ.lead + occ.content + occ.trail if with_padding else occ.content
        if token not in self.pmap.mapping:
            raise UnboundPlaceholder(token)
        content = self.pmap.mapping[token]
        if not with_padding:
            return content
        pads = self.paddings.get(token)
        k = self.seen[token]
        self.seen[token] += 1
        if not pads:
            return content
        lead, trail = pads[min(k, len(pads) - 1)]
        return lead + content + trail


class MaskedTokenizer:
    """Base class for format tokenizers.

    Subclasses implement :meth:`_split`, producing ``(kind, text, role)``
    segments that cover the input exactly: kind ``"struct"`` segments become
    tokens verbatim, ``"content"`` segments are masked with the placeholder
    named by ``role``, ``"attr"`` segments are compound tokens holding one
    masked value (``href="URL_1">``).
    """

    format_name = "text"

    def __init__(self, policy=MaskPolicy.OPTIMIZING, placeholders: Sequence[str] = DEFAULT_PLACEHOLDERS):
        self.policy = MaskPolicy.coerce(policy)
        self.placeholders = tuple(placeholders)
        alt = "|".join(re.escape(p) for p in sorted(self.placeholders, key=len, reverse=True))
        self._exact_re = re.compile(rf"(?:{alt})(?:_[0-9]+)?")
        self._find_re = re.compile(rf"(?<![A-Za-z0-9])(?:{alt})(?:_[0-9]+)?(?![A-Za-z0-9])")

    # -- format hooks -------------------------------------------------------

    def _split(self, text: str):  # pragma: no cover - abstract
        raise NotImplementedError

    def _attr_template(self, segment_text: str, value_start: int, value_end: int, token: str) -> str:
        return segment_text[:value_start] + token + segment_text[value_end:]

    def join(self, pieces: Sequence[str]) -> str:
        return "".join(pieces)

    # -- masking ------------------------------------------------------------

    def base_name(self, token: str) -> Optional[str]:
        """Placeholder name of a placeholder token, else None."""
        m = self._exact_re.fullmatch(token)
        if not m:
            return None
        return token.rsplit("_", 1)[0] if token[-1].isdigit() and "_" in token else token

    def is_placeholder(self, token: str) -> bool:
        return self.base_name(token) is not None

    def _new_state(self):
        return {"map": PlaceholderMap(self.policy), "counters": defaultdict(int),
                "by_content": {}}

    def _mask(self, state, content: str, role: str) -> str:
        pmap: PlaceholderMap = state["map"]
        if self.policy is MaskPolicy.SIMPLIFIED:
            passthrough = self.base_name(content)
            return passthrough if passthrough is not None else role
        if self._exact_re.fullmatch(content):
            bound = pmap.mapping.get(content)
            if bound is None or bound == content:
                pmap.mapping[content] = content
                state["by_content"].setdefault((role, content), content)
                return content
        if self.policy is MaskPolicy.OPTIMIZING:
            known = state["by_content"].get((role, content))
            if known is not None:
                return known
        counters = state["counters"]
        while True:
            counters[role] += 1
            token = f"{role}_{counters[role]}"
            if token not in pmap.mapping:
                break
        pmap.mapping[token] = content
        state["by_content"].setdefault((role, content), token)
        return token

    def mapped_tokenize(self, text: str):
        """Return ``(tokens, placeholder_map)`` for ``text``."""
        state = self._new_state()
        pmap: PlaceholderMap = state["map"]
        tokens: List[str] = []
        for kind, seg, role, *extra in self._split(text):
            if kind == "struct":
                tokens.append(seg)
            elif kind == "content":
                stripped = seg.strip()
                if not stripped:
                    tokens.append(seg)
                    continue
                lead = seg[:len(seg) - len(seg.lstrip())]
                trail = seg[len(seg.rstrip()):]
                token = self._mask(state, stripped, role)
                pmap.occurrences.append(Occurrence(token, stripped, lead, trail))
                tokens.append(token)
            elif kind == "attr":
                start, end = extra
                value = seg[start:end]
                token = self._mask(state, value, role)
                pmap.occurrences.append(Occurrence(token, value))
                tokens.append(self._attr_template(seg, start, end, token))
            else:  # pragma: no cover
                raise ValueError(kind)
        return tokens, pmap

    def tokenize(self, text: str) -> List[str]:
        return self.mapped_tokenize(text)[0]

    # -- reconstruction -----------------------------------------------------

    def reconstruct(self, tokens: Sequence[str], pmap: Optional[PlaceholderMap] = None,
                    instantiation: str = "early", unknown: Optional[str] = None,
                    missing: Optional[List[str]] = None) -> str:
        """Lift tokens back to text.

        Without a map, placeholders are emitted verbatim.  ``early``
        substitutes content token by token before joining; ``late`` joins the
        masked tokens first and substitutes in the joined string.
        ``unknown`` optionally replaces the UNK token text.  When a
        ``missing`` list is given, placeholders without content are left
        verbatim and appended to it instead of raising UnboundPlaceholder.
        """
        if unknown is not None:
            from .vocab import UNK
            tokens = [unknown if t == UNK else t for t in tokens]
        if pmap is None:
            return self.join(tokens)
        binder = _Binder(pmap, self.base_name)
        if missing is not None:
            strict_bind = binder.bind

            def lenient_bind(token, with_padding):
                try:
                    return strict_bind(token, with_padding)
                except UnboundPlaceholder:
                    missing.append(token)
                    return token

            binder.bind = lenient_bind
        if instantiation == "early":
            pieces = []
            for tok in tokens:
                if self.is_placeholder(tok):
                    pieces.append(binder.bind(tok, with_padding=True))
                elif self._find_re.search(tok) and not tok.isspace():
                    pieces.append(self._find_re.sub(lambda m: binder.bind(m.group(0), False), tok))
                else:
                    pieces.append(tok)
            return self.join(pieces)
        if instantiation != "late":
            raise ValueError(f"instantiation must be 'early' or 'late', not {instantiation!r}")
        # late: record which placeholder hits are whole tokens (padded) before joining
        padded_flags = []
        for tok in tokens:
            if self.is_placeholder(tok):
                padded_flags.append(True)
            else:
                padded_flags.extend(False for _ in self._find_re.finditer(tok))
        joined = self.join(tokens)
        flags = iter(padded_flags)
        return self._find_re.sub(lambda m: binder.bind(m.group(0), next(flags, False)), joined)
