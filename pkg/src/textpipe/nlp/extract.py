"""Text extraction: media-type sniffing, encoding normalization, HTML to text.

Input bytes are decoded as UTF-8 when valid, otherwise as windows-1252 (with
the five unmapped code points falling back to their latin-1 values, as web
browsers do). HTML is reduced to plain text: tags stripped, script and style
contents dropped, block-level boundaries turned into newlines, character
references decoded.
"""

from __future__ import annotations

from html.parser import HTMLParser
from typing import Optional

HTML_TYPE = "text/html"
PLAIN_TYPE = "text/plain"

# Bytes that strict cp1252 cannot decode; browsers pass them through as C1
# controls (their latin-1 values).
_CP1252_HOLES = {0x81, 0x8D, 0x8F, 0x90, 0x9D}

_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl",
    "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2",
    "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p",
    "pre", "section", "table", "tbody", "td", "tfoot", "th", "thead", "tr",
    "ul",
}
_DROP_TAGS = {"script", "style"}


def decode_bytes(raw: bytes) -> str:
    """Decode document bytes to text: UTF-8 when valid, windows-1252 else."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        pass
    try:
        return raw.decode("cp1252")
    except UnicodeDecodeError:
        return "".join(
            chr(b) if b in _CP1252_HOLES else bytes([b]).decode("cp1252")
            for b in raw
        )


def sniff_html(raw: bytes) -> bool:
    head = raw[:1024].lower()
    return b"<html" in head or b"<!doctype html" in head


class _TextExtractor(HTMLParser):
    """Collects text content; block-level tags delimit output lines."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self._lines: list[str] = []
        self._current: list[str] = []
        self._drop_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _DROP_TAGS:
            self._drop_depth += 1
        elif tag in _BLOCK_TAGS:
            self._boundary()

    def handle_endtag(self, tag):
        if tag in _DROP_TAGS:
            self._drop_depth = max(0, self._drop_depth - 1)
        elif tag in _BLOCK_TAGS:
            self._boundary()

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self._boundary()

    def handle_data(self, data):
        if self._drop_depth == 0:
            self._current.append(data)

    def _boundary(self):
        line = " ".join("".join(self._current).split())
        self._current = []
        if line:
            self._lines.append(line + "\n")

    def text(self) -> str:
        tail = " ".join("".join(self._current).split())
        parts = list(self._lines)
        if tail:
            parts.append(tail)
        return "".join(parts)


def html_to_text(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    return parser.text()


def extract(raw: bytes, declared_type: Optional[str]) -> dict:
    """Extraction worker body: {"text": ..., "mimetype": ...}.

    An empty document yields empty text rather than an error so uploads of
    empty files still complete their pipeline.
    """
    is_html = declared_type == HTML_TYPE or sniff_html(raw)
    text = decode_bytes(raw).replace("\r\n", "\n")
    if is_html:
        text = html_to_text(text)
    return {"text": text, "mimetype": HTML_TYPE if is_html else PLAIN_TYPE}
