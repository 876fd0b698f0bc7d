"""Delexicalization against an MR's slots and its inverse."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..errors import UnresolvedPlaceholderError
from .text import find_all, is_lexical_slot, is_placeholder, slot_placeholders, tokenize
from .types import Slot


@dataclass(frozen=True)
class Alignment:
    """Where each MR slot surfaced in a text.

    ``found`` maps noun-phrase slot index to the token positions (in the
    original text) where its value was replaced.  ``lexical_found`` maps
    relation/binary slot index to its match count in the output text.
    """

    found: dict[int, tuple[int, ...]] = field(default_factory=dict)
    missing: tuple[int, ...] = ()
    lexical_found: dict[int, int] = field(default_factory=dict)
    lexical_missing: tuple[int, ...] = ()

    @property
    def n_realized(self) -> int:
        return len(self.found) + len(self.lexical_found)

    @property
    def is_empty(self) -> bool:
        return not self.found and not self.lexical_found


def delexicalize(text: str, slots: Sequence[Slot]) -> tuple[str, Alignment]:
    """Replace noun-phrase slot values with placeholders, longest value first."""
    tokens = tokenize(text)
    placeholders = slot_placeholders(slots)
    value_tokens = [tokenize(s.value) for s in slots]

    order = sorted(
        (i for i, ph in enumerate(placeholders) if ph is not None and value_tokens[i]),
        key=lambda i: (-len(value_tokens[i]), i),
    )
    owner = [None] * len(tokens)
    claims: dict[int, tuple[int, int]] = {}
    found: dict[int, tuple[int, ...]] = {}
    for i in order:
        pattern = value_tokens[i]
        m = len(pattern)
        starts = []
        j = 0
        while j + m <= len(tokens):
            if tokens[j:j + m] == pattern and all(owner[k] is None for k in range(j, j + m)):
                for k in range(j, j + m):
                    owner[k] = i
                claims[j] = (i, m)
                starts.append(j)
                j += m
            else:
                j += 1
        if starts:
            found[i] = tuple(starts)

    out: list[str] = []
    j = 0
    while j < len(tokens):
        if j in claims:
            i, m = claims[j]
            out.append(placeholders[i])
            j += m
        else:
            out.append(tokens[j])
            j += 1

    lexical_found: dict[int, int] = {}
    lexical_missing = []
    for i, slot in enumerate(slots):
        if placeholders[i] is not None:
            continue
        hits = find_all(out, value_tokens[i])
        if hits:
            lexical_found[i] = len(hits)
        else:
            lexical_missing.append(i)
    missing = tuple(i for i, ph in enumerate(placeholders) if ph is not None and i not in found)
    return " ".join(out), Alignment(found, missing, lexical_found, tuple(lexical_missing))


def placeholder_table(slots: Sequence[Slot]) -> dict[str, str]:
    return {ph: s.value for ph, s in zip(slot_placeholders(slots), slots) if ph is not None}


def relexicalize(delex_text: str, slots: Sequence[Slot]) -> str:
    """Substitute placeholders with the MR's values; unknown placeholders raise."""
    table = placeholder_table(slots)
    tokens = delex_text.split()
    unresolved = [t for t in tokens if is_placeholder(t) and t not in table]
    if unresolved:
        raise UnresolvedPlaceholderError(dict.fromkeys(unresolved))
    return " ".join(table[t] if is_placeholder(t) else t for t in tokens)


def relexicalize_partial(delex_text: str, slots: Sequence[Slot]) -> tuple[str, list[str]]:
    """Like :func:`relexicalize` but leaves unknown placeholders in place and reports them."""
    table = placeholder_table(slots)
    out, unresolved = [], []
    for t in delex_text.split():
        if is_placeholder(t):
            if t in table:
                out.append(table[t])
            else:
                out.append(t)
                unresolved.append(t)
        else:
            out.append(t)
    return " ".join(out), unresolved


def lexical_slot_indices(slots: Sequence[Slot]) -> list[int]:
    return [i for i, s in enumerate(slots) if is_lexical_slot(s)]
