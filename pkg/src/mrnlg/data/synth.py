"""Synthetic stand-ins for an open-domain QA corpus and a restaurant corpus.

The QA generator mimics the structure of grouped question-answer data:
every group is one question type with a fixed relation, answer slot type and
answer style (entity-only such as ``1792`` or sentential such as ``kentucky
formed in 1792``).  Sentential groups are asked with a conversational prefix
("tell me ...") so the previous question carries the style signal.  Each
question has two phrasings and the answer phrasing follows the question's.
None of the distributions are claims about any real dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .text import normalize
from .types import Corpus, Instance, MeaningRepresentation, Slot

CORE_TYPES = ("objStr", "claStr", "relStr", "polarity")

SEMANTIC_TYPES = (
    "timepoint", "location", "humanBeing", "quantity", "organization", "language",
    "currency", "sport", "film", "book", "animal", "food", "disease", "element",
    "instrument", "genre", "award", "vehicle", "building", "river", "mountain", "team",
)

# (question verb in the MR, surface verb used in sentential answers)
RELATIONS = (
    ("founded", "formed"), ("built", "constructed"), ("discovered", "found"),
    ("invented", "created"), ("named", "called"), ("born", "born"),
    ("released", "released"), ("elected", "elected"), ("painted", "painted"),
    ("written", "written"), ("opened", "opened"), ("launched", "started"),
)

CLASSES = ("state", "city", "river", "person", "company", "band", "country", "book", "film", "planet")
PREFIXES = ("tell me", "do you know", "can you tell me")
_OTHER_PREPS = ("with", "for", "at", "of", "from", "on")
_SYLLABLES = ("ka", "lo", "mir", "ten", "vo", "ra", "shi", "du", "pe", "nal", "zor", "qui",
              "bex", "tam", "ul", "fen", "gri", "sol", "dar", "moj", "xe", "wen", "bru", "cal")

_FIXED_WORDS = frozenset(
    "when where who what was did get got by in is a an the if it not , . yes no sorry i do know "
    "near tell me you can which of with for at from on kind food area price".split()
) | frozenset(w for pair in RELATIONS for w in pair) | frozenset(CLASSES)


@dataclass(frozen=True)
class SynthConfig:
    n_groups: int = 50
    instances_per_group: int = 10
    n_slot_types: int = 20
    context: bool = True
    noise_rate: float = 0.0
    values_per_type: int = 6
    n_entities: int = 40
    polarity_rate: float = 0.1

    def validate(self) -> None:
        if self.n_groups < 1 or self.instances_per_group < 1 or self.values_per_type < 1 or self.n_entities < 1:
            raise ContractError("synthetic corpus counts must be positive")
        if self.n_slot_types < len(CORE_TYPES):
            raise ContractError(
                f"n_slot_types must be at least {len(CORE_TYPES)} (entity/class/relation/polarity), "
                f"got {self.n_slot_types}"
            )
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ContractError("noise_rate must lie in [0, 1]")


def semantic_type_names(n: int) -> list[str]:
    base = len(SEMANTIC_TYPES)
    return [SEMANTIC_TYPES[i] if i < base else f"{SEMANTIC_TYPES[i % base]}{i // base + 1}" for i in range(n)]


class _WordMint:
    """Pronounceable, globally unique pseudo-words."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used = set(_FIXED_WORDS)

    def word(self) -> str:
        while True:
            k = int(self.rng.integers(2, 4))
            w = "".join(_SYLLABLES[int(i)] for i in self.rng.integers(0, len(_SYLLABLES), size=k))
            if w not in self.used:
                self.used.add(w)
                return w

    def entity(self, multiword_rate: float = 0.2) -> str:
        if self.rng.random() < multiword_rate:
            return f"{self.word()} {self.word()}"
        return self.word()

    def number(self, low: int, high: int) -> str:
        while True:
            w = str(int(self.rng.integers(low, high)))
            if w not in self.used:
                self.used.add(w)
                return w


def _answer_shape(sem_index: int, type_name: str) -> tuple[str, str]:
    base = type_name.rstrip("0123456789")
    if base == "timepoint":
        return "when", "in"
    if base == "location":
        return "where", "in"
    if base == "humanBeing":
        return "who", "by"
    return "what", _OTHER_PREPS[sem_index % len(_OTHER_PREPS)]


def _values_for(type_name: str, mint: _WordMint, n: int) -> list[str]:
    base = type_name.rstrip("0123456789")
    if base == "timepoint":
        return [mint.number(1500, 2021) for _ in range(n)]
    if base == "quantity":
        return [mint.number(2, 1000) for _ in range(n)]
    return [mint.entity() for _ in range(n)]


def synth_corpus(config: SynthConfig | None = None, seed: int = 0, name: str = "synth-qa") -> Corpus:
    config = config or SynthConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    mint = _WordMint(rng)
    sem = semantic_type_names(config.n_slot_types - len(CORE_TYPES))
    pools = {t: _values_for(t, mint, config.values_per_type) for t in sem}
    entities = [mint.entity() for _ in range(config.n_entities)]

    kinds = ["polarity" if rng.random() < config.polarity_rate else "wh" for _ in range(config.n_groups)]
    if "polarity" not in kinds:
        kinds[-1] = "polarity"
    if not sem:
        kinds = ["polarity"] * config.n_groups

    instances: list[Instance] = []
    drafts = []
    for g in range(config.n_groups):
        gid = f"g{g:03d}"
        sentential = bool(rng.random() < 0.5)
        prefix = PREFIXES[int(rng.integers(len(PREFIXES)))]
        rel, surface = RELATIONS[int(rng.integers(len(RELATIONS)))]
        cla = CLASSES[int(rng.integers(len(CLASSES)))]
        ans_index = g % len(sem) if sem else -1
        kind = kinds[g]
        extras = [j for j in range(len(sem)) if j % config.n_groups == g and (kind == "polarity" or j != ans_index)]
        if kind == "polarity":
            rel, surface = "is", "is"
        seen = set()
        for i in range(config.instances_per_group):
            for _ in range(50):
                obj = entities[int(rng.integers(len(entities)))]
                if kind == "polarity":
                    ans = "yes" if rng.random() < 0.5 else "no"
                else:
                    ans = pools[sem[ans_index]][int(rng.integers(config.values_per_type))]
                if (obj, ans) not in seen:
                    break
            seen.add((obj, ans))
            variant = int(rng.integers(2))
            extra_slots = [Slot(sem[j], pools[sem[j]][int(rng.integers(config.values_per_type))]) for j in extras]

            if kind == "polarity":
                slots = [Slot("polarity", ans), Slot("objStr", obj), Slot("claStr", cla), Slot("relStr", rel)]
                neg = "" if ans == "yes" else " not"
                if sentential:
                    question = [f"{prefix} if {obj} is a {cla}", f"{prefix} whether {obj} is a {cla}"][variant]
                    answer = [f"{ans} , {obj} is{neg} a {cla}", f"{ans} , {obj} is{neg} a {cla} indeed"][variant]
                else:
                    question = [f"is {obj} a {cla}", f"is {obj} really a {cla}"][variant]
                    answer = [ans, f"{ans} ."][variant]
            else:
                wh, prep = _answer_shape(ans_index, sem[ans_index])
                slots = [Slot(sem[ans_index], ans), Slot("objStr", obj), Slot("claStr", cla), Slot("relStr", rel)]
                if sentential:
                    question = [f"{prefix} {wh} {obj} was {rel}", f"{prefix} {wh} {obj} got {rel}"][variant]
                    answer = [f"{obj} {surface} {prep} {ans}", f"{obj} was {surface} {prep} {ans}"][variant]
                else:
                    question = [f"{wh} was {obj} {rel}", f"{wh} did {obj} get {rel}"][variant]
                    answer = [ans, f"{prep} {ans}"][variant]
            slots.extend(extra_slots)
            drafts.append((f"{gid}-{i:02d}", gid, slots, question, answer))

    used_objects = sorted({d[2][1].value for d in drafts})
    for inst_id, gid, slots, question, answer in drafts:
        if config.noise_rate > 0 and rng.random() < config.noise_rate:
            own = {s.value for s in slots}
            foreign = [e for e in used_objects if e not in own]
            if foreign and rng.random() < 0.5:
                answer = f"{answer} near {foreign[int(rng.integers(len(foreign)))]}"
            else:
                answer = "sorry i do not know"
        mr = MeaningRepresentation("inform", tuple(slots), normalize(question) if config.context else None)
        instances.append(Instance(inst_id, gid, mr, (normalize(answer),)))
    return Corpus(name, tuple(instances))


_FOODS = ("french", "italian", "chinese", "indian", "thai", "mexican", "japanese", "korean")
_PRICES = ("cheap", "moderate", "expensive")


def synth_sfx_corpus(n_instances: int = 200, seed: int = 0, name: str = "synth-sfx") -> Corpus:
    """Restaurant-domain MRs with several dialog acts and singleton groups."""
    if n_instances < 1:
        raise ContractError("n_instances must be positive")
    rng = np.random.default_rng(seed)
    mint = _WordMint(rng)
    names = [mint.entity(0.3) for _ in range(30)]
    areas = [mint.word() for _ in range(8)]
    out = []
    for i in range(n_instances):
        kind = int(rng.integers(5))
        name_v = names[int(rng.integers(len(names)))]
        food = _FOODS[int(rng.integers(len(_FOODS)))]
        area = areas[int(rng.integers(len(areas)))]
        price = _PRICES[int(rng.integers(len(_PRICES)))]
        if kind == 0:
            mr = MeaningRepresentation("inform", (Slot("name", name_v), Slot("food", food)))
            text = f"{name_v} serves {food} food"
        elif kind == 1:
            mr = MeaningRepresentation("inform", (Slot("name", name_v), Slot("area", area)))
            text = f"{name_v} is in the {area} area"
        elif kind == 2:
            kids = "yes" if rng.random() < 0.5 else "no"
            mr = MeaningRepresentation("inform", (Slot("name", name_v), Slot("pricerange", price), Slot("kidsallowed", kids)))
            text = f"{name_v} is {price} and " + ("allows kids" if kids == "yes" else "does not allow kids")
        elif kind == 3:
            mr = MeaningRepresentation("inform_no_match", (Slot("area", area),))
            text = f"there is no restaurant in {area}"
        else:
            mr = MeaningRepresentation("confirm", (Slot("food", food),))
            text = f"did you say you want {food} food"
        inst_id = f"sfx-{i:04d}"
        out.append(Instance(inst_id, inst_id, mr, (normalize(text),)))
    return Corpus(name, tuple(out))
