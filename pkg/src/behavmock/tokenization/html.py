"""HTML tokenizer built on :class:`html.parser.HTMLParser`."""

from __future__ import annotations

from html.parser import HTMLParser
from typing import List

from ..errors import TokenizeFailure
from .masking import MaskedTokenizer

BLOCK_TAGS = {"p", "h1", "h2", "h3", "h4", "h5", "h6", "blockquote", "pre", "ul", "ol", "li"}
INLINE_TAGS = {"strong", "em", "b", "i", "code", "a"}
VOID_TAGS = {"br", "hr"}
KNOWN_TAGS = BLOCK_TAGS | INLINE_TAGS | VOID_TAGS


class _Splitter(HTMLParser):
    def __init__(self, text: str):
        super().__init__(convert_charrefs=False)
        self.text = text
        self.line_starts = [0]
        for k, ch in enumerate(text):
            if ch == "\n":
                self.line_starts.append(k + 1)
        self.segments: List[tuple] = []
        self.stack: List[str] = []
        self.buf: List[str] = []

    def _position(self):
        line, col = self.getpos()
        return self.line_starts[line - 1] + col

    def fail(self, reason):
        raise TokenizeFailure(self._position(), reason)

    def flush(self):
        if self.buf:
            self.segments.append(("content", "".join(self.buf), "TEXT"))
            self.buf = []

    def handle_starttag(self, tag, attrs):
        if tag not in KNOWN_TAGS:
            self.fail(f"unsupported tag <{tag}>")
        self.flush()
        if tag == "a":
            href = next((v for k, v in attrs if k == "href"), None)
            if href is None:
                self.segments.append(("struct", "<a>", ""))
            else:
                self.segments.append(("struct", "<a", ""))
                attr = f'href="{href}">'
                self.segments.append(("attr", attr, "URL", 6, 6 + len(href)))
        else:
            self.segments.append(("struct", f"<{tag}>", ""))
        if tag not in VOID_TAGS:
            self.stack.append(tag)

    def handle_startendtag(self, tag, attrs):
        if tag not in VOID_TAGS:
            self.fail(f"<{tag}/> cannot be self-closing")
        self.flush()
        self.segments.append(("struct", self.get_starttag_text(), ""))

    def handle_endtag(self, tag):
        if not self.stack or self.stack[-1] != tag:
            self.fail(f"unbalanced </{tag}>")
        self.flush()
        self.stack.pop()
        self.segments.append(("struct", f"</{tag}>", ""))

    def handle_data(self, data):
        if "<" in data:
            self.fail("malformed markup")
        self.buf.append(data)

    def handle_entityref(self, name):
        self.buf.append(f"&{name};")

    def handle_charref(self, name):
        self.buf.append(f"&#{name};")

    def handle_comment(self, data):
        self.fail("comments are not supported")

    def handle_decl(self, decl):
        self.fail("declarations are not supported")

    def handle_pi(self, data):
        self.fail("processing instructions are not supported")

    def unknown_decl(self, data):
        self.fail("unsupported markup declaration")


class HTMLTokenizer(MaskedTokenizer):
    """Tags are tokens, text between tags is masked.

    ``<a href="...">`` becomes the two tokens ``<a`` and ``href="URL_k">``;
    other attributes are dropped.
    """

    format_name = "html"

    def _split(self, text: str):
        splitter = _Splitter(text)
        splitter.feed(text)
        splitter.close()
        if splitter.rawdata:
            raise TokenizeFailure(len(text) - len(splitter.rawdata), "incomplete markup")
        splitter.flush()
        if splitter.stack:
            raise TokenizeFailure(len(text), f"unclosed <{splitter.stack[-1]}>")
        return splitter.segments

    def join(self, pieces):
        out = []
        for k, piece in enumerate(pieces):
            out.append(piece)
            if piece == "<a" and k + 1 < len(pieces):
                out.append(" ")
        return "".join(out)
