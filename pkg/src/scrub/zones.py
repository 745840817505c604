"""File classification and lexical zone extraction.

Redaction of code files is confined to *zones* — comment and string
literal byte ranges. This module finds those ranges with a single
left-to-right lexical pass per language family (no AST construction),
plus a keyword-anchored function span finder used by the metadata
metrics.

All offsets are byte offsets into the raw blob; every delimiter the
lexers care about is ASCII, so multi-byte UTF-8 content passes through
untouched.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Optional

from .errors import UnsupportedLanguage


class FileClass(str, Enum):
    CODE = "CODE"
    CONFIG = "CONFIG"
    DOC = "DOC"
    BINARY = "BINARY"


class ZoneKind(str, Enum):
    COMMENT = "COMMENT"
    STRING = "STRING"


@dataclass(frozen=True, order=True)
class Zone:
    """One comment or string span, delimiters included.

    ``scan_start``/``scan_end`` bound the interior (marker and quote
    bytes excluded); scanners operate on the interior so a greedy match
    can never swallow a delimiter.
    """

    start: int
    end: int
    kind: ZoneKind
    scan_start: int = -1
    scan_end: int = -1

    def __post_init__(self):
        if self.scan_start < 0:
            object.__setattr__(self, "scan_start", self.start)
        if self.scan_end < 0:
            object.__setattr__(self, "scan_end", self.end)


@dataclass(frozen=True)
class FunctionSpan:
    start: int
    end: int
    line_count: int


@dataclass(frozen=True)
class StringRule:
    delim: bytes
    escapes: bool = True
    multiline: bool = False


@dataclass(frozen=True)
class LanguageFamily:
    """Lexer configuration: comment markers and string delimiters.

    String rules are tried in declaration order, so longer delimiters
    (triple quotes) must precede their single-char prefixes.
    """

    line_comments: tuple[bytes, ...] = ()
    block_comments: tuple[tuple[bytes, bytes], ...] = ()
    strings: tuple[StringRule, ...] = ()


FAMILIES: dict[str, LanguageFamily] = {
    "c": LanguageFamily(
        line_comments=(b"//",),
        block_comments=((b"/*", b"*/"),),
        strings=(
            StringRule(b'"'),
            StringRule(b"'"),
            StringRule(b"`", escapes=False, multiline=True),
        ),
    ),
    "go": LanguageFamily(
        line_comments=(b"//",),
        block_comments=((b"/*", b"*/"),),
        strings=(
            StringRule(b'"'),
            StringRule(b"'"),
            StringRule(b"`", escapes=False, multiline=True),
        ),
    ),
    "rust": LanguageFamily(
        line_comments=(b"//",),
        block_comments=((b"/*", b"*/"),),
        # no single-quote rule: lifetimes ('a) would open phantom strings
        strings=(StringRule(b'"'),),
    ),
    "python": LanguageFamily(
        line_comments=(b"#",),
        strings=(
            StringRule(b'"""', multiline=True),
            StringRule(b"'''", multiline=True),
            StringRule(b'"'),
            StringRule(b"'"),
        ),
    ),
    "hash": LanguageFamily(
        line_comments=(b"#",),
        strings=(StringRule(b'"'), StringRule(b"'")),
    ),
    "shell": LanguageFamily(
        line_comments=(b"#",),
        strings=(StringRule(b'"'), StringRule(b"'", escapes=False)),
    ),
    "php": LanguageFamily(
        line_comments=(b"//", b"#"),
        block_comments=((b"/*", b"*/"),),
        strings=(StringRule(b'"'), StringRule(b"'")),
    ),
    "sql": LanguageFamily(
        line_comments=(b"--",),
        block_comments=((b"/*", b"*/"),),
        strings=(StringRule(b"'"), StringRule(b'"')),
    ),
}


def _is_text(data: bytes) -> bool:
    if b"\x00" in data:
        return False
    try:
        data.decode("utf-8")
    except UnicodeDecodeError:
        return False
    return True


class LangMap:
    """Extension/basename → (language, class, lexer family) lookup table."""

    def __init__(self, table: dict):
        self.extensions: dict[str, dict] = table.get("extensions", {})
        self.basenames: dict[str, dict] = table.get("basenames", {})

    @classmethod
    def load(cls, path: Optional[str] = None) -> "LangMap":
        if path is None:
            text = resources.files("scrub.data").joinpath("lang_map.json").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        return cls(json.loads(text))

    def entry_for(self, path: str) -> Optional[dict]:
        name = path.rsplit("/", 1)[-1]
        for base, entry in self.basenames.items():
            if name == base or name.startswith(base + "."):
                return entry
        dot = name.rfind(".")
        if dot > 0:
            return self.extensions.get(name[dot:].lower())
        return None

    def language_of(self, path: str) -> Optional[str]:
        entry = self.entry_for(path)
        return entry["language"] if entry else None

    def code_languages(self) -> set[str]:
        out = {e["language"] for e in self.extensions.values() if e["class"] == "CODE"}
        out.update(e["language"] for e in self.basenames.values() if e["class"] == "CODE")
        return out

    def family_of(self, language: str) -> Optional[LanguageFamily]:
        for entry in list(self.extensions.values()) + list(self.basenames.values()):
            if entry["language"] == language and "family" in entry:
                return FAMILIES.get(entry["family"])
        return None

    def function_style_of(self, language: str) -> Optional[str]:
        for entry in list(self.extensions.values()) + list(self.basenames.values()):
            if entry["language"] == language and "functions" in entry:
                return entry["functions"]
        return None


_DEFAULT_MAP: Optional[LangMap] = None


def default_lang_map() -> LangMap:
    global _DEFAULT_MAP
    if _DEFAULT_MAP is None:
        _DEFAULT_MAP = LangMap.load()
    return _DEFAULT_MAP


def classify_file(path: str, content: bytes, lang_map: Optional[LangMap] = None) -> FileClass:
    """Classify by text-ness first, then by the extension table.

    Unknown text extensions fall through to DOC so they are still scanned
    in full rather than silently skipped.
    """
    if not _is_text(content):
        return FileClass.BINARY
    lm = lang_map or default_lang_map()
    entry = lm.entry_for(path)
    if entry is None:
        return FileClass.DOC
    return FileClass(entry["class"])


def extract_zones(content: bytes, language: str, lang_map: Optional[LangMap] = None) -> list[Zone]:
    """Comment and string-literal byte ranges, sorted and non-overlapping.

    Single-line strings terminate at the closing delimiter or end of
    line; multiline strings and block comments left open run to EOF
    (conservative — more content scanned, never less).
    """
    lm = lang_map or default_lang_map()
    family = lm.family_of(language)
    if family is None:
        raise UnsupportedLanguage(f"no lexer for language {language!r}")
    return _lex(content, family)


def _lex(data: bytes, family: LanguageFamily) -> list[Zone]:
    zones: list[Zone] = []
    n = len(data)
    i = 0
    while i < n:
        matched = False
        for marker in family.line_comments:
            if data.startswith(marker, i):
                end = data.find(b"\n", i)
                end = n if end == -1 else end
                zones.append(Zone(i, end, ZoneKind.COMMENT, i + len(marker), end))
                i = end
                matched = True
                break
        if matched:
            continue
        for opener, closer in family.block_comments:
            if data.startswith(opener, i):
                tail = data.find(closer, i + len(opener))
                if tail == -1:
                    end, scan_end = n, n
                else:
                    end, scan_end = tail + len(closer), tail
                zones.append(Zone(i, end, ZoneKind.COMMENT, i + len(opener), scan_end))
                i = end
                matched = True
                break
        if matched:
            continue
        for rule in family.strings:
            if data.startswith(rule.delim, i):
                end = _string_end(data, i, rule)
                closed = data.endswith(rule.delim, i + len(rule.delim), end) and end - i >= 2 * len(rule.delim)
                scan_end = end - len(rule.delim) if closed else end
                zones.append(Zone(i, end, ZoneKind.STRING, i + len(rule.delim), scan_end))
                i = end
                matched = True
                break
        if not matched:
            i += 1
    return zones


def _string_end(data: bytes, start: int, rule: StringRule) -> int:
    n = len(data)
    i = start + len(rule.delim)
    while i < n:
        if rule.escapes and data[i : i + 1] == b"\\":
            i += 2
            continue
        if data.startswith(rule.delim, i):
            return i + len(rule.delim)
        if not rule.multiline and data[i : i + 1] == b"\n":
            return i
        i += 1
    return n


def extract_functions(
    content: bytes, language: str, lang_map: Optional[LangMap] = None
) -> list[FunctionSpan]:
    """Keyword-anchored function spans; empty for languages without anchors."""
    lm = lang_map or default_lang_map()
    style = lm.function_style_of(language)
    if style is None or not content:
        return []
    try:
        zones = extract_zones(content, language, lm)
    except UnsupportedLanguage:
        zones = []
    if style == "python":
        return _python_functions(content)
    keyword = {"function": b"function", "func": b"func", "fn": b"fn"}[style]
    return _brace_functions(content, keyword, zones)


def _line_count(data: bytes, start: int, end: int) -> int:
    return data[start:end].count(b"\n") + 1


def _python_functions(data: bytes) -> list[FunctionSpan]:
    spans: list[FunctionSpan] = []
    lines = data.splitlines(keepends=True)
    offsets: list[int] = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line)
    header = re.compile(rb"^([ \t]*)(?:async[ \t]+)?def[ \t]+\w")
    for idx, line in enumerate(lines):
        m = header.match(line)
        if not m:
            continue
        indent = len(m.group(1))
        end_idx = idx
        for j in range(idx + 1, len(lines)):
            stripped = lines[j].strip()
            if not stripped:
                continue
            body_indent = len(lines[j]) - len(lines[j].lstrip(b" \t"))
            if body_indent <= indent:
                break
            end_idx = j
        start = offsets[idx]
        end = offsets[end_idx] + len(lines[end_idx].rstrip(b"\n"))
        spans.append(FunctionSpan(start, end, end_idx - idx + 1))
    return spans


def _brace_functions(data: bytes, keyword: bytes, zones: list[Zone]) -> list[FunctionSpan]:
    def in_zone(pos: int) -> bool:
        for z in zones:
            if z.start <= pos < z.end:
                return True
            if z.start > pos:
                break
        return False

    spans: list[FunctionSpan] = []
    for m in re.finditer(rb"\b" + keyword + rb"\b", data):
        if in_zone(m.start()):
            continue
        open_brace = -1
        for i in range(m.end(), min(len(data), m.end() + 400)):
            c = data[i : i + 1]
            if c == b"{" and not in_zone(i):
                open_brace = i
                break
            if c == b";":  # declaration, not a definition
                break
        if open_brace == -1:
            continue
        depth = 0
        end = -1
        for i in range(open_brace, len(data)):
            if in_zone(i):
                continue
            c = data[i : i + 1]
            if c == b"{":
                depth += 1
            elif c == b"}":
                depth -= 1
                if depth == 0:
                    end = i + 1
                    break
        if end == -1:
            end = len(data)
        spans.append(FunctionSpan(m.start(), end, _line_count(data, m.start(), end)))
    return spans
