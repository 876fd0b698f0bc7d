"""Parser for MR strings of the form ``da(slot='value';slot2=value2;flag)``."""

from __future__ import annotations

from ..errors import MRParseError
from .text import normalize
from .types import MeaningRepresentation, Slot

_QUOTES = "'\""


def parse_mr_string(mr: str) -> MeaningRepresentation:
    n = len(mr)
    pos = 0

    def skip_ws(p: int) -> int:
        while p < n and mr[p].isspace():
            p += 1
        return p

    def fail(message: str, p: int):
        raise MRParseError(message, mr, p)

    pos = skip_ws(pos)
    start = pos
    while pos < n and mr[pos] not in "();=":
        pos += 1
    da = mr[start:pos].strip()
    if not da:
        fail("expected dialog act", start)
    if pos >= n:
        fail("expected '('", pos)
    if mr[pos] != "(":
        fail("expected '('", pos)
    pos += 1

    slots: list[Slot] = []
    pos = skip_ws(pos)
    if pos < n and mr[pos] == ")":
        pos += 1
    else:
        while True:
            pos = skip_ws(pos)
            if pos >= n:
                fail("unexpected end of input", pos)
            start = pos
            while pos < n and mr[pos] not in "=;()":
                pos += 1
            name = mr[start:pos].strip()
            if not name:
                fail("expected slot name", start)
            if pos >= n:
                fail("unexpected end of input", pos)
            value = "yes"
            if mr[pos] == "=":
                pos = skip_ws(pos + 1)
                if pos >= n:
                    fail("expected slot value", pos)
                if mr[pos] in _QUOTES:
                    quote = mr[pos]
                    end = mr.find(quote, pos + 1)
                    if end < 0:
                        fail("unterminated quoted value", pos)
                    raw = mr[pos + 1:end]
                    pos = end + 1
                else:
                    start = pos
                    while pos < n and mr[pos] not in ";()":
                        pos += 1
                    raw = mr[start:pos]
                value = normalize(raw)
                if not value:
                    fail(f"empty value for slot {name!r}", pos)
            slots.append(Slot(name, value))
            pos = skip_ws(pos)
            if pos >= n:
                fail("unexpected end of input", pos)
            if mr[pos] == ";":
                pos += 1
                continue
            if mr[pos] == ")":
                pos += 1
                break
            fail("expected ';' or ')'", pos)

    pos = skip_ws(pos)
    if pos != n:
        fail("trailing characters", pos)
    return MeaningRepresentation(da.lower(), tuple(slots))


def format_mr_string(mr: MeaningRepresentation) -> str:
    parts = [f"{s.slot_type}='{s.value}'" for s in mr.slots]
    return f"{mr.dialog_act}({';'.join(parts)})"
