"""Reading and writing corpora as JSON lines."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import CorpusFormatError, MRParseError
from .mr_parse import parse_mr_string
from .text import normalize
from .types import Corpus, Instance, MeaningRepresentation, Slot

FORMATS = ("qa-jsonl", "sfx")


def _require(obj: dict, key: str, kind, path, line):
    if key not in obj:
        raise CorpusFormatError(f"missing field {key!r}", path, line)
    value = obj[key]
    if not isinstance(value, kind):
        raise CorpusFormatError(f"field {key!r} has type {type(value).__name__}", path, line)
    return value


def _references(obj, path, line) -> tuple[str, ...]:
    refs = _require(obj, "references", list, path, line)
    if not refs or not all(isinstance(r, str) for r in refs):
        raise CorpusFormatError("'references' must be a nonempty list of strings", path, line)
    return tuple(normalize(r) for r in refs)


def _qa_instance(obj: dict, path, line) -> Instance:
    inst_id = _require(obj, "id", str, path, line)
    group_id = _require(obj, "group_id", str, path, line)
    da = _require(obj, "da", str, path, line)
    context = obj.get("context")
    if context is not None and not isinstance(context, str):
        raise CorpusFormatError("'context' must be a string or null", path, line)
    raw_slots = _require(obj, "slots", list, path, line)
    slots = []
    for s in raw_slots:
        if not isinstance(s, dict) or not isinstance(s.get("type"), str) or not isinstance(s.get("value"), str):
            raise CorpusFormatError("each slot needs string 'type' and 'value'", path, line)
        value = normalize(s["value"])
        if not s["type"] or not value:
            raise CorpusFormatError("slot type and value must be nonempty", path, line)
        slots.append(Slot(s["type"], value))
    mr = MeaningRepresentation(da, tuple(slots), normalize(context) if context is not None else None)
    return Instance(inst_id, group_id, mr, _references(obj, path, line))


def _sfx_instance(obj: dict, stem: str, path, line) -> Instance:
    mr_text = _require(obj, "mr", str, path, line)
    try:
        mr = parse_mr_string(mr_text)
    except MRParseError as exc:
        raise CorpusFormatError(str(exc), path, line) from exc
    inst_id = obj.get("id") if isinstance(obj.get("id"), str) else f"{stem}-{line}"
    return Instance(inst_id, inst_id, mr, _references(obj, path, line))


def load_corpus(path, format: str = "qa-jsonl", name: str | None = None) -> Corpus:  # noqa: A002
    if format not in FORMATS:
        raise ValueError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusFormatError(f"cannot read file ({exc.strerror})", path) from exc
    instances = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON ({exc.msg})", path, lineno) from exc
        if not isinstance(obj, dict):
            raise CorpusFormatError("each line must be a JSON object", path, lineno)
        if format == "qa-jsonl":
            instances.append(_qa_instance(obj, path, lineno))
        else:
            instances.append(_sfx_instance(obj, path.stem, path, lineno))
    return Corpus(name or path.stem, tuple(instances))


def instance_to_json(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "group_id": inst.group_id,
        "context": inst.mr.context,
        "da": inst.mr.dialog_act,
        "slots": [{"type": s.slot_type, "value": s.value} for s in inst.mr.slots],
        "references": list(inst.references),
    }


def save_corpus(corpus: Corpus, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in corpus.instances:
            fh.write(json.dumps(instance_to_json(inst), ensure_ascii=False) + "\n")
