"""Token vocabularies and the per-stream token views of an instance."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .delex import delexicalize
from .text import tokenize
from .types import Corpus, Instance

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SEP = "<sep>"

FIELDS = ("slot_types", "slot_values", "da", "target", "context", "context_delex")


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIALS:
            tokens = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")

    @classmethod
    def from_counts(cls, counts: Counter) -> "Vocab":
        ordered = sorted((t for t in counts if t not in SPECIALS), key=lambda t: (-counts[t], t))
        return cls(list(SPECIALS) + ordered)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int], strip_specials: bool = True) -> list[str]:
        out = []
        for i in ids:
            tok = self.tokens[i]
            if strip_specials and tok in (PAD, BOS, EOS):
                continue
            out.append(tok)
        return out


def slot_value_tokens(inst: Instance) -> list[str]:
    out: list[str] = []
    for k, slot in enumerate(inst.mr.slots):
        if k:
            out.append(SEP)
        out.extend(tokenize(slot.value))
    return out


def context_tokens(inst: Instance, delex: bool) -> list[str]:
    ctx = inst.mr.context
    if ctx is None:
        return []
    if delex:
        text = inst.delex_context if inst.delex_context is not None else delexicalize(ctx, inst.mr.slots)[0]
        return text.split()
    return tokenize(ctx)


def target_tokens(inst: Instance, reference: str | None = None) -> list[str]:
    """Delexicalized tokens of ``reference`` (default: the main reference)."""
    if reference is None and inst.delex_main_reference is not None:
        return inst.delex_main_reference.split()
    text = inst.main_reference if reference is None else reference
    return delexicalize(text, inst.mr.slots)[0].split()


def field_tokens(inst: Instance, field: str) -> list[list[str]]:
    """Token sequences an instance contributes to ``field``."""
    if field == "slot_types":
        return [inst.mr.slot_types]
    if field == "slot_values":
        return [slot_value_tokens(inst)]
    if field == "da":
        return [[inst.mr.dialog_act]]
    if field == "target":
        return [target_tokens(inst, r) for r in inst.references]
    if field == "context":
        return [context_tokens(inst, delex=False)]
    if field == "context_delex":
        return [context_tokens(inst, delex=True)]
    raise ValueError(f"unknown vocabulary field {field!r}; expected one of {FIELDS}")


def build_vocab(corpus: Corpus | Iterable[Instance], field: str) -> Vocab:
    if field not in FIELDS:
        raise ValueError(f"unknown vocabulary field {field!r}; expected one of {FIELDS}")
    instances = corpus.instances if isinstance(corpus, Corpus) else corpus
    counts: Counter = Counter()
    for inst in instances:
        for seq in field_tokens(inst, field):
            counts.update(seq)
    return Vocab.from_counts(counts)
