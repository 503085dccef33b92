"""Transcript text normalization.

Six rules applied in a fixed order: unicode canonical composition, lowercase,
whitespace collapse, trim, terminal punctuation strip, abbreviation expansion
(longest match, word-bounded). The composition is idempotent, which the test
suite checks by property.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

_WS_RUN = re.compile(r"\s+")
_TERMINAL_PUNCT = ".,;:!?"


@dataclass(frozen=True)
class NormalizedText:
    raw: str
    normalized: str
    rules_applied: tuple[str, ...]


class AbbreviationTable:
    """Word-bounded replacement table, longest pattern first.

    Loaded from a two-column UTF-8 file (tab-separated: pattern, expansion).
    Expansions are themselves normalized at load so that applying the table
    never reintroduces case, spacing or punctuation the earlier rules remove.
    """

    def __init__(self, entries: dict[str, str] | None = None):
        self.entries: dict[str, str] = {}
        for pattern, repl in (entries or {}).items():
            self.entries[_basic_normalize(pattern)] = _basic_normalize(repl)
        self._regex = None
        if self.entries:
            alternatives = sorted(self.entries, key=len, reverse=True)
            joined = "|".join(re.escape(p) for p in alternatives)
            # \b fails around punctuation-final patterns like "arleq.", so
            # bound on whitespace / string edges instead.
            self._regex = re.compile(rf"(?:(?<=\s)|^)(?:{joined})(?=\s|$)")

    def apply(self, text: str) -> str:
        if self._regex is None:
            return text
        return self._regex.sub(lambda m: self.entries[m.group(0)], text)

    @classmethod
    def load(cls, path: str | Path) -> "AbbreviationTable":
        entries: dict[str, str] = {}
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            pattern, _, repl = line.partition("\t")
            if not repl:
                raise ValueError(f"abbreviation line needs two tab-separated columns: {raw!r}")
            entries[pattern] = repl.strip()
        return cls(entries)


EMPTY_TABLE = AbbreviationTable()


def _basic_normalize(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    text = text.lower()
    text = _WS_RUN.sub(" ", text)
    text = text.strip()
    # strip the whole trailing punctuation/space mix, or "a . ." would need
    # two passes and break idempotence
    text = text.rstrip(_TERMINAL_PUNCT + " ")
    return text


def normalize_text(raw: str, table: AbbreviationTable = EMPTY_TABLE) -> NormalizedText:
    rules = ["nfc", "lower", "collapse_ws", "trim", "strip_terminal_punct"]
    text = _basic_normalize(raw)
    # lowercasing or expansion can expose more work; iterate to the fixpoint
    # so normalize(normalized) == normalized holds
    for _ in range(8):
        expanded = table.apply(text)
        if expanded != text and "abbreviations" not in rules:
            rules.append("abbreviations")
        nxt = _basic_normalize(expanded)
        if nxt == text:
            break
        text = nxt
    return NormalizedText(raw=raw, normalized=text, rules_applied=tuple(rules))


def normalize(raw: str, table: AbbreviationTable = EMPTY_TABLE) -> str:
    return normalize_text(raw, table).normalized
