"""Corpus model and preparation pipeline."""

from .delex import Alignment, delexicalize, relexicalize, relexicalize_partial
from .io import FORMATS, load_corpus, save_corpus
from .mr_parse import format_mr_string, parse_mr_string
from .pipeline import (
    NO_SLOT,
    UNALIGNED,
    AlignPolicy,
    DropRecord,
    align_filter,
    augment,
    augment_corpus,
    build_gazetteer,
    make_partitions,
    prepare_corpus,
    prepare_instance,
    slot_type_ranking,
    split_by_group,
)
from .synth import SynthConfig, synth_corpus, synth_sfx_corpus
from .text import is_lexical_slot, is_placeholder, normalize, tokenize
from .types import Corpus, Instance, MeaningRepresentation, PartitionSpec, Slot
from .vocab import Vocab, build_vocab


def corpus_stats(corpus: Corpus) -> dict:
    """Size, slot types, dialog acts and delexicalized word count of a corpus."""
    words = build_vocab(corpus, "target")
    return {
        "Size": len(corpus),
        "Slots": len(corpus.ontology),
        "DAs": len(corpus.da_inventory),
        "Words": len(words) - 4,
    }


__all__ = [
    "FORMATS", "NO_SLOT", "UNALIGNED", "Alignment", "AlignPolicy", "Corpus", "DropRecord", "Instance",
    "MeaningRepresentation", "PartitionSpec", "Slot", "SynthConfig", "Vocab", "align_filter", "augment",
    "augment_corpus", "build_gazetteer", "build_vocab", "corpus_stats", "delexicalize", "format_mr_string",
    "is_lexical_slot", "is_placeholder", "load_corpus", "make_partitions", "normalize", "parse_mr_string",
    "prepare_corpus", "prepare_instance", "relexicalize", "relexicalize_partial", "save_corpus",
    "slot_type_ranking", "split_by_group", "synth_corpus", "synth_sfx_corpus", "tokenize",
]
