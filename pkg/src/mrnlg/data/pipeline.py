"""Corpus preparation: alignment filtering, augmentation, splits and partitions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError
from .delex import delexicalize, placeholder_table, relexicalize
from .text import find_all, is_lexical_slot, is_placeholder, tokenize
from .types import Corpus, Instance, PartitionSpec

UNALIGNED = "unaligned noun phrase"
NO_SLOT = "no slot realized"

# gazetteer entries this short are too ambiguous to flag
_MIN_GAZETTEER_CHARS = 3


def prepare_instance(inst: Instance) -> Instance:
    """Attach the delexicalized main reference, context and alignment."""
    delex, alignment = delexicalize(inst.main_reference, inst.mr.slots)
    ctx = inst.mr.context
    delex_ctx = delexicalize(ctx, inst.mr.slots)[0] if ctx is not None else None
    return replace(inst, delex_main_reference=delex, delex_context=delex_ctx, alignment=alignment)


def prepare_corpus(corpus: Corpus) -> Corpus:
    return corpus.with_instances([prepare_instance(i) for i in corpus.instances])


def _prepared(inst: Instance) -> Instance:
    return inst if inst.delex_main_reference is not None and inst.alignment is not None else prepare_instance(inst)


def build_gazetteer(instances: Iterable[Instance]) -> frozenset[tuple[str, ...]]:
    """Token sequences of every noun-phrase slot value seen in the corpus."""
    out = set()
    for inst in instances:
        for s in inst.mr.slots:
            if not is_lexical_slot(s) and len(s.value) >= _MIN_GAZETTEER_CHARS:
                out.add(tuple(tokenize(s.value)))
    return frozenset(out)


@dataclass(frozen=True)
class AlignPolicy:
    use_gazetteer: bool = True
    min_realized: int = 1
    gazetteer: Optional[frozenset] = None


@dataclass(frozen=True)
class DropRecord:
    instance: Instance
    reasons: tuple[str, ...]
    detail: str = ""

    def to_json(self) -> dict:
        return {"id": self.instance.id, "group_id": self.instance.group_id,
                "reasons": list(self.reasons), "detail": self.detail}


def unaligned_mentions(inst: Instance, gazetteer) -> list[str]:
    """Entities in the delexicalized main reference that the MR cannot account for."""
    inst = _prepared(inst)
    tokens = inst.delex_main_reference.split()
    table = placeholder_table(inst.mr.slots)
    problems = [t for t in tokens if is_placeholder(t) and t not in table]
    if gazetteer:
        own = {tuple(tokenize(s.value)) for s in inst.mr.slots}
        index = _gazetteer_index(gazetteer)
        hits = set()
        for i, tok in enumerate(tokens):
            for entry in index.get(tok, ()):
                if entry not in own and tuple(tokens[i:i + len(entry)]) == entry:
                    hits.add(entry)
        problems.extend(" ".join(e) for e in sorted(hits))
    return problems


@lru_cache(maxsize=8)
def _gazetteer_index(gazetteer: frozenset) -> dict[str, list[tuple[str, ...]]]:
    index: dict[str, list[tuple[str, ...]]] = {}
    for entry in sorted(gazetteer):
        if entry:
            index.setdefault(entry[0], []).append(entry)
    return index


def align_filter(corpus: Corpus, policy: AlignPolicy | None = None) -> tuple[Corpus, list[DropRecord]]:
    """Keep instances whose main reference aligns with their MR."""
    policy = policy or AlignPolicy()
    gazetteer = None
    if policy.use_gazetteer:
        gazetteer = policy.gazetteer if policy.gazetteer is not None else build_gazetteer(corpus.instances)
    kept, dropped = [], []
    for raw in corpus.instances:
        inst = _prepared(raw)
        reasons, details = [], []
        problems = unaligned_mentions(inst, gazetteer)
        if problems:
            reasons.append(UNALIGNED)
            details.append("unaligned: " + ", ".join(problems))
        if inst.alignment.n_realized < policy.min_realized:
            reasons.append(NO_SLOT)
        if reasons:
            dropped.append(DropRecord(inst, tuple(reasons), "; ".join(details)))
        else:
            kept.append(inst)
    return corpus.with_instances(kept), dropped


def _lexical_values(inst: Instance) -> set[tuple[str, ...]]:
    return {tuple(tokenize(s.value)) for s in inst.mr.slots if is_lexical_slot(s)}


def augment(group: Sequence[Instance]) -> list[Instance]:
    """Add every group answer that can be re-filled from an instance's own slots."""
    group = [_prepared(i) for i in group]
    if len({i.group_id for i in group}) > 1:
        raise ContractError("augment: instances must share a group id")
    templates = []
    for src in group:
        templates.append((src.delex_main_reference, _lexical_values(src)))
    out = []
    for inst in group:
        table = placeholder_table(inst.mr.slots)
        own_lexical = _lexical_values(inst)
        refs = list(inst.references)
        for template, src_lexical in templates:
            tokens = template.split()
            if any(is_placeholder(t) and t not in table for t in tokens):
                continue
            # a template must not carry the source's verb/binary values the target lacks
            if any(find_all(tokens, v) for v in src_lexical - own_lexical):
                continue
            text = relexicalize(template, inst.mr.slots)
            if text not in refs:
                refs.append(text)
        out.append(replace(inst, references=tuple(refs)))
    return out


def augment_corpus(corpus: Corpus) -> Corpus:
    augmented = {}
    for gid, members in corpus.groups().items():
        for inst in augment(members):
            augmented[inst.id] = inst
    return corpus.with_instances([augmented[i.id] for i in corpus.instances])


def split_by_group(corpus: Corpus, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> tuple[Corpus, Corpus, Corpus]:
    """Group-disjoint train/dev/test split closest to ``ratios`` by instance count."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ContractError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    groups = corpus.groups()
    gids = list(groups)
    if len(gids) < 3:
        raise ContractError(f"split_by_group needs at least 3 groups, got {len(gids)}")
    order = [gids[i] for i in np.random.default_rng(seed).permutation(len(gids))]
    cum = np.concatenate([[0], np.cumsum([len(groups[g]) for g in order])])
    total = cum[-1]
    G = len(order)
    b1 = min(range(1, G - 1), key=lambda k: (abs(cum[k] - ratios[0] * total), k))
    b2 = min(range(b1 + 1, G), key=lambda k: (abs(cum[k] - (ratios[0] + ratios[1]) * total), k))
    assignment = {}
    for k, g in enumerate(order):
        assignment[g] = 0 if k < b1 else (1 if k < b2 else 2)
    parts = [[], [], []]
    for inst in corpus.instances:
        parts[assignment[inst.group_id]].append(inst)
    names = ("train", "dev", "test")
    return tuple(corpus.with_instances(p, f"{corpus.name}.{n}") for p, n in zip(parts, names))


def slot_type_ranking(corpus: Corpus) -> list[str]:
    """Slot types by descending frequency, ties lexicographic."""
    counts = Counter(s.slot_type for inst in corpus.instances for s in inst.mr.slots)
    return sorted(counts, key=lambda t: (-counts[t], t))


def make_partitions(corpus: Corpus, spec: PartitionSpec | Sequence[int]) -> list[Corpus]:
    """Nested sub-corpora restricted to the top-k most frequent slot types."""
    if not isinstance(spec, PartitionSpec):
        spec = PartitionSpec(tuple(spec))
    ranking = slot_type_ranking(corpus)
    if spec.sizes[-1] > len(ranking):
        raise ContractError(f"partition size {spec.sizes[-1]} exceeds ontology size {len(ranking)}")
    out = []
    for k, size in enumerate(spec.sizes, start=1):
        allowed = set(ranking[:size])
        members = [i for i in corpus.instances if all(s.slot_type in allowed for s in i.mr.slots)]
        out.append(corpus.with_instances(members, f"{corpus.name}.{k}"))
    return out
