"""Corpus data model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from ..errors import ContractError


@dataclass(frozen=True)
class Slot:
    slot_type: str
    value: str

    def __post_init__(self):
        if not self.slot_type:
            raise ContractError("slot type must be nonempty")
        if not self.value:
            raise ContractError(f"slot {self.slot_type!r} has an empty value")


@dataclass(frozen=True)
class MeaningRepresentation:
    dialog_act: str
    slots: tuple[Slot, ...] = ()
    context: Optional[str] = None

    def __post_init__(self):
        if not self.dialog_act:
            raise ContractError("dialog act must be nonempty")
        object.__setattr__(self, "slots", tuple(self.slots))

    @property
    def slot_types(self) -> list[str]:
        return [s.slot_type for s in self.slots]


@dataclass(frozen=True)
class Instance:
    """An MR with its references; ``references[0]`` is the main reference."""

    id: str
    group_id: str
    mr: MeaningRepresentation
    references: tuple[str, ...]
    delex_main_reference: Optional[str] = field(default=None, compare=False)
    delex_context: Optional[str] = field(default=None, compare=False)
    alignment: Optional[object] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.references:
            raise ContractError(f"instance {self.id!r} has no references")

    @property
    def main_reference(self) -> str:
        return self.references[0]


@dataclass(frozen=True)
class Corpus:
    name: str
    instances: tuple[Instance, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Instance]:
        return iter(self.instances)

    @property
    def ontology(self) -> frozenset[str]:
        return frozenset(s.slot_type for inst in self.instances for s in inst.mr.slots)

    @property
    def da_inventory(self) -> frozenset[str]:
        return frozenset(inst.mr.dialog_act for inst in self.instances)

    @property
    def group_ids(self) -> list[str]:
        """Group ids in order of first appearance."""
        return list(dict.fromkeys(inst.group_id for inst in self.instances))

    def groups(self) -> dict[str, list[Instance]]:
        out: dict[str, list[Instance]] = {}
        for inst in self.instances:
            out.setdefault(inst.group_id, []).append(inst)
        return out

    def with_instances(self, instances: Sequence[Instance], name: Optional[str] = None) -> "Corpus":
        return Corpus(self.name if name is None else name, tuple(instances))


@dataclass(frozen=True)
class PartitionSpec:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes or sizes[0] < 1:
            raise ContractError("partition sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ContractError(f"partition sizes must be strictly increasing: {sizes}")
