"""Slot error rates against the MR, the main reference and all references, plus corpus BLEU.

Slot comparisons happen in delexicalized space.  Texts are re-delexicalized
against the instance MR first, which leaves already-delexicalized text
unchanged.  Counting is per slot type over multisets: a type expected twice
and realized once contributes one missing slot.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .data.delex import delexicalize, relexicalize_partial
from .data.text import find_all, is_lexical_slot, is_placeholder, placeholder_prefix, tokenize
from .data.types import Corpus, Instance, MeaningRepresentation, Slot
from .errors import ContractError

METRICS = ("bleu", "ser_mr", "ser_trg", "ser_mtrg")
SER_VARIANTS = ("mr", "trg", "mtrg")
MAX_ORDER = 4


def _slots(mr: MeaningRepresentation | Sequence[Slot]) -> tuple[Slot, ...]:
    return tuple(mr.slots) if isinstance(mr, MeaningRepresentation) else tuple(mr)


def realized_slots(text: str, mr: MeaningRepresentation | Sequence[Slot]) -> Counter:
    """Multiset of slot types realized in ``text``.

    Placeholder tokens count once each, keyed by the MR slot type that owns
    their prefix (or the bare prefix when the MR has no such type).  A
    relation or binary slot counts once per non-overlapping match of its value.
    """
    slots = _slots(mr)
    tokens = delexicalize(text, slots)[0].split() if text.strip() else []
    owner: dict[str, str] = {}
    for s in slots:
        if not is_lexical_slot(s):
            owner.setdefault(placeholder_prefix(s.slot_type), s.slot_type)
    out: Counter = Counter()
    for tok in tokens:
        if is_placeholder(tok):
            prefix = tok.rsplit("_", 1)[0]
            out[owner.get(prefix, prefix)] += 1
    for slot_type, value in dict.fromkeys((s.slot_type, s.value) for s in slots if is_lexical_slot(s)):
        hits = len(find_all(tokens, tokenize(value)))
        if hits:
            out[slot_type] += hits
    return out


def expected_slots(mr: MeaningRepresentation | Sequence[Slot]) -> Counter:
    return Counter(s.slot_type for s in _slots(mr))


@dataclass(frozen=True)
class SerScore:
    p: int
    q: int
    n: int

    @property
    def score(self) -> Optional[float]:
        return None if self.n == 0 else (self.p + self.q) / self.n

    @property
    def skipped(self) -> bool:
        return self.n == 0

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "N": self.n, "score": self.score}


def _compare(expected: Counter, found: Counter) -> tuple[int, int]:
    missing = sum(max(0, expected[t] - found[t]) for t in expected)
    redundant = sum(max(0, found[t] - expected[t]) for t in found)
    return missing, redundant


def ser_mr(output: str, mr: MeaningRepresentation | Sequence[Slot]) -> SerScore:
    """Missing and redundant slots relative to the MR, over the number of MR slots."""
    expected = expected_slots(mr)
    p, q = _compare(expected, realized_slots(output, mr))
    return SerScore(p, q, sum(expected.values()))


def ser_trg(output: str, main_reference: str, mr: MeaningRepresentation | Sequence[Slot]) -> SerScore:
    """As :func:`ser_mr` with the slots realized by the main reference standing in for the MR."""
    expected = realized_slots(main_reference, mr)
    p, q = _compare(expected, realized_slots(output, mr))
    return SerScore(p, q, sum(expected.values()))


def ser_mtrg(output: str, references: Sequence[str], mr: MeaningRepresentation | Sequence[Slot]) -> SerScore:
    """Output slot types that no reference realizes, over the size of the references' type union."""
    if not references:
        raise ContractError("ser_mtrg needs at least one reference")
    union = set()
    for ref in references:
        union.update(realized_slots(ref, mr))
    p = len(set(realized_slots(output, mr)) - union)
    return SerScore(p, 0, len(union))


@dataclass
class SerReport:
    variant: str
    rows: list[SerScore] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return sum(r.skipped for r in self.rows)

    @property
    def scored(self) -> list[SerScore]:
        return [r for r in self.rows if not r.skipped]

    @property
    def micro(self) -> Optional[float]:
        # skipped rows add nothing to either side of the ratio
        n = sum(r.n for r in self.scored)
        return None if n == 0 else sum(r.p + r.q for r in self.scored) / n

    @property
    def macro(self) -> Optional[float]:
        scores = [r.score for r in self.scored]
        return sum(scores) / len(scores) if scores else None

    def to_json(self) -> dict:
        return {"variant": self.variant, "micro": self.micro, "macro": self.macro,
                "instances": len(self.rows), "skipped": self.skipped,
                "p": sum(r.p for r in self.scored), "q": sum(r.q for r in self.scored),
                "N": sum(r.n for r in self.scored)}


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple[float, ...]
    matches: tuple[int, ...]
    totals: tuple[int, ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int

    def to_json(self) -> dict:
        return {"score": self.score, "precisions": list(self.precisions), "matches": list(self.matches),
                "totals": list(self.totals), "brevity_penalty": self.brevity_penalty,
                "hyp_length": self.hyp_length, "ref_length": self.ref_length}


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: Sequence[str], reference_sets: Sequence[Sequence[str]], max_order: int = MAX_ORDER) -> BleuReport:
    """Corpus BLEU with clipped n-gram counts, closest-length brevity penalty and no smoothing."""
    if len(hypotheses) != len(reference_sets):
        raise ContractError(f"{len(hypotheses)} hypotheses but {len(reference_sets)} reference sets")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, reference_sets):
        if not refs:
            raise ContractError("every hypothesis needs at least one reference")
        h = tokenize(hyp)
        rs = [tokenize(r) for r in refs]
        hyp_len += len(h)
        ref_len += min((len(r) for r in rs), key=lambda n: (abs(n - len(h)), n))
        for n in range(1, max_order + 1):
            counts = _ngrams(h, n)
            ceiling: Counter = Counter()
            for r in rs:
                ceiling |= _ngrams(r, n)
            matches[n - 1] += sum(min(c, ceiling[g]) for g, c in counts.items())
            totals[n - 1] += max(0, len(h) - n + 1)
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuReport(score, precisions, tuple(matches), tuple(totals), bp, hyp_len, ref_len)


@dataclass
class EvalReport:
    metrics: tuple[str, ...]
    ids: list[str]
    ser: dict[str, SerReport]
    bleu: Optional[BleuReport]
    outputs: list[str]

    def rows(self) -> list[dict]:
        out = []
        for k, inst_id in enumerate(self.ids):
            row = {"id": inst_id, "output": self.outputs[k]}
            for variant in SER_VARIANTS:
                if variant in self.ser:
                    row[f"ser_{variant}"] = self.ser[variant].rows[k].to_json()
            out.append(row)
        return out

    def aggregate(self) -> dict:
        agg: dict = {"instances": len(self.ids), "headline": "micro"}
        if self.bleu is not None:
            agg["bleu"] = self.bleu.to_json()
        for variant in SER_VARIANTS:
            if variant in self.ser:
                agg[f"ser_{variant}"] = self.ser[variant].to_json()
        return agg

    def table(self) -> str:
        """Aligned plain-text summary (micro SER is the headline number)."""
        header = ["metric", "micro", "macro", "skipped"]
        lines = []
        if self.bleu is not None:
            lines.append(["BLEU", f"{self.bleu.score:.4f}", "-", "-"])
        for variant in SER_VARIANTS:
            if variant in self.ser:
                r = self.ser[variant]
                fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
                lines.append([f"SER_{variant}", fmt(r.micro), fmt(r.macro), str(r.skipped)])
        widths = [max(len(row[i]) for row in [header] + lines) for i in range(4)]
        render = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
        note = "SER counts slot types as multisets; micro = pooled counts, macro = mean of per-instance scores"
        return "\n".join([note, render(header), render(["-" * w for w in widths])] + [render(r) for r in lines]) + "\n"

    def write(self, path) -> None:
        """JSON lines (one per instance) then an aggregate line; the table goes to ``<path>.txt``."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as f:
            for row in self.rows():
                f.write(json.dumps(row, sort_keys=True) + "\n")
            f.write(json.dumps({"aggregate": self.aggregate()}, sort_keys=True) + "\n")
        Path(str(path) + ".txt").write_text(self.table(), encoding="utf-8")


def parse_metrics(names: Iterable[str] | str) -> tuple[str, ...]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    names = [n.strip().lower() for n in names]
    unknown = [n for n in names if n not in METRICS]
    if unknown:
        raise ContractError(f"unknown metrics {unknown}; valid names: {', '.join(METRICS)}")
    if not names:
        raise ContractError(f"no metrics requested; valid names: {', '.join(METRICS)}")
    return tuple(m for m in METRICS if m in names)


def evaluate_corpus(outputs: Sequence[str], corpus: Corpus | Sequence[Instance],
                    which: Iterable[str] | str = METRICS, ids: Optional[Sequence[str]] = None) -> EvalReport:
    """Score outputs aligned one-to-one with the corpus instances.

    Outputs may be lexicalized or delexicalized.  BLEU runs on lexical text,
    so placeholders the MR can fill are substituted first.
    """
    which = parse_metrics(which)
    instances = list(corpus.instances if isinstance(corpus, Corpus) else corpus)
    outputs = list(outputs)
    if len(outputs) != len(instances):
        raise ContractError(f"{len(outputs)} outputs for {len(instances)} instances")
    if ids is not None:
        for got, inst in zip(ids, instances):
            if got != inst.id:
                raise ContractError(f"output id {got!r} does not match instance id {inst.id!r}")
    ser = {}
    for variant in SER_VARIANTS:
        if f"ser_{variant}" not in which:
            continue
        rows = []
        for out, inst in zip(outputs, instances):
            if variant == "mr":
                rows.append(ser_mr(out, inst.mr))
            elif variant == "trg":
                rows.append(ser_trg(out, inst.main_reference, inst.mr))
            else:
                rows.append(ser_mtrg(out, inst.references, inst.mr))
        ser[variant] = SerReport(variant, rows)
    report_bleu = None
    if "bleu" in which:
        hyps = [relexicalize_partial(out, inst.mr.slots)[0] for out, inst in zip(outputs, instances)]
        report_bleu = bleu(hyps, [inst.references for inst in instances])
    return EvalReport(which, [i.id for i in instances], ser, report_bleu, outputs)


__all__ = [
    "BleuReport", "EvalReport", "METRICS", "SerReport", "SerScore", "bleu", "evaluate_corpus", "expected_slots",
    "parse_metrics", "realized_slots", "ser_mr", "ser_mtrg", "ser_trg",
]
