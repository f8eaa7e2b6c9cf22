"""Built-in toy program under test: a Markdown subset to HTML converter.

Rule table (the whole converter):

==========================  ===============================
Markdown                    HTML
==========================  ===============================
``# T`` .. ``###### T``     ``<h1>T</h1>`` .. ``<h6>T</h6>``
paragraph lines ``T``       ``<p>T</p>`` (lines joined by ``\\n``)
``**T**``                   ``<strong>T</strong>``
``*T*`` or ``_T_``          ``<em>T</em>``
```T```                     ``<code>T</code>``
``[T](U)``                  ``<a href="U">T</a>``
blank line                  ends the current block
==========================  ===============================

Every block is followed by ``\\n`` in the output.  Input outside the subset
(lists, quotes, raw HTML, entities, escapes, images, strikethrough,
unclosed markers, trailing whitespace, ...) is rejected with a position.
The accepted subset renders the same as CommonMark.
"""

from __future__ import annotations

import sys
from typing import List

from .errors import TokenizeFailure
from .tokenization.markdown import MdSeg, lex_markdown


class ConversionError(ValueError):
    def __init__(self, position, reason):
        super().__init__(f"position {position}: {reason}")
        self.position = position
        self.reason = reason


def _render_inline(segs: List[MdSeg], out: List[str]):
    i = 0
    open_strong = open_em = open_code = False
    while i < len(segs):
        s = segs[i]
        if s.kind == "content":
            out.append(s.text)
        elif s.kind == "strong":
            out.append("</strong>" if open_strong else "<strong>")
            open_strong = not open_strong
        elif s.kind == "em":
            out.append("</em>" if open_em else "<em>")
            open_em = not open_em
        elif s.kind == "code":
            out.append("</code>" if open_code else "<code>")
            open_code = not open_code
        elif s.kind == "link_open":
            text, url = segs[i + 1].text, segs[i + 3].text
            out.append(f'<a href="{url}">{text}</a>')
            i += 4
        i += 1


def builtin_convert(markdown: str) -> str:
    """Convert the Markdown subset to HTML; raises ConversionError."""
    try:
        segs = lex_markdown(markdown)
    except TokenizeFailure as exc:
        raise ConversionError(exc.position, exc.reason) from None

    # group segments into lines
    lines: List[List[MdSeg]] = [[]]
    for s in segs:
        if s.kind == "newline":
            lines.append([])
        else:
            lines[-1].append(s)
    if not lines[-1]:
        lines.pop()

    out: List[str] = []
    para: List[List[MdSeg]] = []

    def close_paragraph():
        if para:
            out.append("<p>")
            for k, line in enumerate(para):
                if k:
                    out.append("\n")
                _render_inline(line, out)
            out.append("</p>\n")
            para.clear()

    for line in lines:
        if not line:
            close_paragraph()
        elif line[0].kind == "heading":
            close_paragraph()
            level = len(line[0].text) - 1
            out.append(f"<h{level}>")
            _render_inline(line[1:], out)
            out.append(f"</h{level}>\n")
        else:
            para.append(line)
    close_paragraph()
    return "".join(out)


def main(argv=None) -> int:
    """Read Markdown on stdin, write HTML on stdout; exit 1 on rejection."""
    data = sys.stdin.read()
    try:
        sys.stdout.write(builtin_convert(data))
    except ConversionError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
