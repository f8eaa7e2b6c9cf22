"""Lexer and tokenizer for the supported Markdown subset.

The lexer is shared with the built-in converter so that both agree on
exactly which characters are markup.  Supported constructs: ATX headings
``#``..``######``, paragraphs, ``**strong**``, ``*em*`` / ``_em_``,
```code``` spans and ``[text](url)`` links.  Anything else that looks like
markup is rejected.
"""

from __future__ import annotations

import re
from typing import List, NamedTuple

from ..errors import TokenizeFailure
from .masking import MaskedTokenizer

_HEADING_RE = re.compile(r"(#{1,6}) ")
_BLOCK_REJECT = [
    (re.compile(r">"), "block quotes are not supported"),
    (re.compile(r"[-+*] "), "lists are not supported"),
    (re.compile(r"[0-9]+[.)] "), "ordered lists are not supported"),
    (re.compile(r"```|~~~"), "fenced code is not supported"),
    (re.compile(r"[ \t]"), "indented lines are not supported"),
    (re.compile(r"(?:-{3,}|\*{3,}|_{3,}|={3,})$"), "rules and setext headings are not supported"),
    (re.compile(r"\|"), "tables are not supported"),
]
_INLINE_REJECT = {
    "<": "raw HTML is not supported",
    ">": "raw HTML is not supported",
    "&": "entities are not supported",
    '"': "quotes are not supported",
    "\\": "backslash escapes are not supported",
}
_NO_NEST = set("*`[]")


class MdSeg(NamedTuple):
    kind: str   # heading, newline, strong, em, code, link_open, link_mid, link_close, content
    text: str
    role: str = ""
    offset: int = 0


def _is_word(ch: str) -> bool:
    return ch.isalnum()


def _check_span(line: str, base: int, start: int, end: int, what: str, allow=()):
    body = line[start:end]
    if not body:
        raise TokenizeFailure(base + start, f"empty {what}")
    if body != body.strip():
        raise TokenizeFailure(base + start, f"{what} may not start or end with whitespace")
    for k, ch in enumerate(body):
        if ch in _NO_NEST and ch not in allow:
            raise TokenizeFailure(base + start + k, f"nested markup inside {what}")


def _lex_inline(line: str, base: int, out: List[MdSeg]):
    buf_start = 0
    i = 0
    n = len(line)

    def flush(upto):
        if upto > buf_start:
            out.append(MdSeg("content", line[buf_start:upto], "TEXT", base + buf_start))

    while i < n:
        ch = line[i]
        if ch in _INLINE_REJECT:
            raise TokenizeFailure(base + i, _INLINE_REJECT[ch])
        if line.startswith("~~", i):
            raise TokenizeFailure(base + i, "strikethrough is not supported")
        if line.startswith("![", i):
            raise TokenizeFailure(base + i, "images are not supported")
        if ch == "`":
            close = line.find("`", i + 1)
            if close < 0:
                raise TokenizeFailure(base + i, "unclosed code span")
            _check_span(line, base, i + 1, close, "code span", allow="*[]")
            flush(i)
            out += [MdSeg("code", "`", "", base + i),
                    MdSeg("content", line[i + 1:close], "TEXT", base + i + 1),
                    MdSeg("code", "`", "", base + close)]
            i = buf_start = close + 1
        elif line.startswith("**", i):
            close = line.find("**", i + 2)
            if close < 0:
                raise TokenizeFailure(base + i, "unclosed strong emphasis")
            _check_span(line, base, i + 2, close, "strong emphasis")
            flush(i)
            out += [MdSeg("strong", "**", "", base + i),
                    MdSeg("content", line[i + 2:close], "TEXT", base + i + 2),
                    MdSeg("strong", "**", "", base + close)]
            i = buf_start = close + 2
        elif ch == "*":
            close = line.find("*", i + 1)
            if close < 0:
                raise TokenizeFailure(base + i, "unclosed emphasis")
            _check_span(line, base, i + 1, close, "emphasis")
            flush(i)
            out += [MdSeg("em", "*", "", base + i),
                    MdSeg("content", line[i + 1:close], "TEXT", base + i + 1),
                    MdSeg("em", "*", "", base + close)]
            i = buf_start = close + 1
        elif ch == "_" and (i == 0 or not _is_word(line[i - 1])) and i + 1 < n and not line[i + 1].isspace() \
                and line[i + 1] != "_":
            close = -1
            k = i + 1
            while True:
                k = line.find("_", k)
                if k < 0:
                    break
                if (k + 1 == n or not _is_word(line[k + 1])) and not line[k - 1].isspace():
                    close = k
                    break
                k += 1
            if close < 0:
                raise TokenizeFailure(base + i, "unclosed emphasis")
            _check_span(line, base, i + 1, close, "emphasis")
            flush(i)
            out += [MdSeg("em", "_", "", base + i),
                    MdSeg("content", line[i + 1:close], "TEXT", base + i + 1),
                    MdSeg("em", "_", "", base + close)]
            i = buf_start = close + 1
        elif ch == "[":
            mid = line.find("](", i + 1)
            if mid < 0:
                raise TokenizeFailure(base + i, "unclosed link")
            close = line.find(")", mid + 2)
            if close < 0:
                raise TokenizeFailure(base + mid, "unclosed link destination")
            _check_span(line, base, i + 1, mid, "link text")
            url = line[mid + 2:close]
            if not url or any(c.isspace() or c in "()[]*`" for c in url):
                raise TokenizeFailure(base + mid + 2, "malformed link destination")
            flush(i)
            out += [MdSeg("link_open", "[", "", base + i),
                    MdSeg("content", line[i + 1:mid], "TEXT", base + i + 1),
                    MdSeg("link_mid", "](", "", base + mid),
                    MdSeg("content", url, "URL", base + mid + 2),
                    MdSeg("link_close", ")", "", base + close)]
            i = buf_start = close + 1
        elif ch == "]":
            raise TokenizeFailure(base + i, "unbalanced ]")
        else:
            i += 1
    flush(n)


def lex_markdown(text: str) -> List[MdSeg]:
    """Split Markdown into markup and content segments covering ``text``."""
    out: List[MdSeg] = []
    pos = 0
    for line in text.splitlines(keepends=True):
        body = line[:-1] if line.endswith("\n") else line
        if "\r" in body:
            raise TokenizeFailure(pos + body.index("\r"), "carriage returns are not supported")
        if body:
            if body != body.rstrip():
                raise TokenizeFailure(pos + len(body.rstrip()), "trailing whitespace is not supported")
            m = _HEADING_RE.match(body)
            start = 0
            if m:
                if not body[m.end():]:
                    raise TokenizeFailure(pos, "empty heading")
                if body[m.end()].isspace():
                    raise TokenizeFailure(pos + m.end(), "heading text may not start with whitespace")
                out.append(MdSeg("heading", m.group(0), "", pos))
                start = m.end()
            else:
                for pattern, reason in _BLOCK_REJECT:
                    if pattern.match(body):
                        raise TokenizeFailure(pos, reason)
            _lex_inline(body[start:], pos + start, out)
        if line.endswith("\n"):
            out.append(MdSeg("newline", "\n", "", pos + len(body)))
        pos += len(line)
    return out


class MarkdownTokenizer(MaskedTokenizer):
    """Tokenizer for the Markdown subset: every markup marker is one token,
    content runs become placeholders."""

    format_name = "markdown"

    def _split(self, text: str):
        for seg in lex_markdown(text):
            if seg.kind == "content":
                yield ("content", seg.text, seg.role)
            else:
                yield ("struct", seg.text, "")
