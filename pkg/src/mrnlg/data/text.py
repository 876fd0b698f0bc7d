"""Tokenization and placeholder conventions."""

from __future__ import annotations

import re
from typing import Optional, Sequence

from .types import Slot

PLACEHOLDER_RE = re.compile(r"^[A-Z][A-Z0-9]*_[0-9]+$")
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

BINARY_VALUES = frozenset({"yes", "no"})


def tokenize(text: str) -> list[str]:
    """Lowercase and split punctuation off words; placeholder tokens pass through."""
    out: list[str] = []
    for piece in text.split():
        if PLACEHOLDER_RE.match(piece):
            out.append(piece)
        else:
            out.extend(_TOKEN_RE.findall(piece.lower()))
    return out


def normalize(text: str) -> str:
    return " ".join(tokenize(text))


def is_placeholder(token: str) -> bool:
    return PLACEHOLDER_RE.match(token) is not None


def placeholder_prefix(slot_type: str) -> str:
    prefix = re.sub(r"[^A-Za-z0-9]", "", slot_type).upper()
    if not prefix or not prefix[0].isalpha():
        prefix = "SLOT" + prefix
    return prefix


def is_relation_type(slot_type: str) -> bool:
    return slot_type.lower().startswith("rel")


def is_lexical_slot(slot: Slot) -> bool:
    """Relation (verb-phrase) slots and binary-valued slots are never delexicalized."""
    return is_relation_type(slot.slot_type) or slot.value in BINARY_VALUES


def slot_placeholders(slots: Sequence[Slot]) -> list[Optional[str]]:
    """Placeholder per slot (``None`` for lexical slots), numbered 1.. per prefix in MR order."""
    counts: dict[str, int] = {}
    out: list[Optional[str]] = []
    for slot in slots:
        if is_lexical_slot(slot):
            out.append(None)
            continue
        prefix = placeholder_prefix(slot.slot_type)
        counts[prefix] = counts.get(prefix, 0) + 1
        out.append(f"{prefix}_{counts[prefix]}")
    return out


def find_all(tokens: Sequence[str], pattern: Sequence[str]) -> list[int]:
    """Start positions of non-overlapping left-to-right matches of ``pattern``."""
    n, m = len(tokens), len(pattern)
    if m == 0:
        return []
    hits = []
    i = 0
    pat = list(pattern)
    while i + m <= n:
        if list(tokens[i:i + m]) == pat:
            hits.append(i)
            i += m
        else:
            i += 1
    return hits
