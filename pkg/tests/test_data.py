import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrnlg.data import (
    NO_SLOT,
    UNALIGNED,
    Corpus,
    Instance,
    MeaningRepresentation,
    PartitionSpec,
    Slot,
    SynthConfig,
    align_filter,
    augment,
    augment_corpus,
    build_vocab,
    corpus_stats,
    delexicalize,
    format_mr_string,
    load_corpus,
    make_partitions,
    parse_mr_string,
    prepare_corpus,
    relexicalize,
    save_corpus,
    slot_type_ranking,
    split_by_group,
    synth_corpus,
    tokenize,
)
from mrnlg.data.delex import relexicalize_partial
from mrnlg.data.pipeline import AlignPolicy
from mrnlg.data.text import find_all, slot_placeholders
from mrnlg.errors import ContractError, CorpusFormatError, MRParseError, UnresolvedPlaceholderError


def inst(iid, gid, slots, refs, context=None, da="inform"):
    return Instance(iid, gid, MeaningRepresentation(da, tuple(Slot(t, v) for t, v in slots), context), tuple(refs))


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("Yes, Kentucky's OBJSTR_1 here.") == ["yes", ",", "kentucky", "'", "s", "OBJSTR_1", "here", "."]


def test_delexicalize_kentucky(kentucky_mr):
    text, al = delexicalize("kentucky formed in 1792", kentucky_mr.slots)
    assert text == "OBJSTR_1 formed in TIMEPOINT_1"
    assert set(al.found) == {0, 1}
    assert al.missing == (2,)
    assert al.lexical_missing == (3,) and al.lexical_found == {}

    text, al = delexicalize("1792", kentucky_mr.slots)
    assert text == "TIMEPOINT_1" and set(al.found) == {0}


def test_delexicalize_no_values_is_noop(kentucky_mr):
    text, al = delexicalize("nothing to see here", kentucky_mr.slots)
    assert text == "nothing to see here" and al.is_empty


def test_delexicalize_longest_match_first_and_numbering():
    slots = (Slot("name", "red door"), Slot("name", "red door cafe"), Slot("kidsallowed", "no"), Slot("relStr", "is"))
    assert slot_placeholders(slots) == ["NAME_1", "NAME_2", None, None]
    text, al = delexicalize("red door cafe is next to red door , no kids", slots)
    assert text == "NAME_2 is next to NAME_1 , no kids"
    assert al.lexical_found == {2: 1, 3: 1}


def test_delexicalize_token_boundaries():
    text, _ = delexicalize("kentuckyan state", (Slot("objStr", "kentucky"),))
    assert text == "kentuckyan state"


def test_relexicalize_examples(kentucky_mr):
    assert relexicalize("OBJSTR_1 formed in TIMEPOINT_1", kentucky_mr.slots) == "kentucky formed in 1792"
    assert relexicalize("no placeholders", kentucky_mr.slots) == "no placeholders"
    with pytest.raises(UnresolvedPlaceholderError) as err:
        relexicalize("HUMANBEING_2 is here", (Slot("humanBeing", "ada"),))
    assert "HUMANBEING_2" in str(err.value)
    assert relexicalize_partial("HUMANBEING_2 is HUMANBEING_1", (Slot("humanBeing", "ada"),)) == (
        "HUMANBEING_2 is ada", ["HUMANBEING_2"])


_words = st.sampled_from(["alpha", "beta", "gamma", "delta", "in", "of", "was", "red", "door"])


@given(st.lists(st.tuples(st.sampled_from(["name", "food", "area", "relStr"]), st.lists(_words, min_size=1, max_size=2)),
                min_size=1, max_size=4),
       st.lists(_words, min_size=1, max_size=8))
def test_delex_relex_round_trip_property(slot_specs, words):
    slots = tuple(Slot(t, " ".join(v)) for t, v in slot_specs)
    text = " ".join(words)
    delex, _ = delexicalize(text, slots)
    assert relexicalize(delex, slots) == text
    assert delexicalize(delex, slots)[0] == delex


def test_align_filter_examples(kentucky_mr):
    good = Instance("a", "g", kentucky_mr, ("kentucky formed in 1792",))
    foreign = inst("b", "g", [("timepoint", "1845"), ("objStr", "texas")], ["texas formed in 1845 near kentucky"])
    nothing = inst("c", "g", [("timepoint", "1845"), ("objStr", "texas")], ["i do not know"])
    kept, dropped = align_filter(Corpus("c", (good, foreign, nothing)))
    assert [i.id for i in kept] == ["a"]
    reasons = {d.instance.id: d.reasons for d in dropped}
    assert reasons == {"b": (UNALIGNED,), "c": (NO_SLOT,)}
    assert json.loads(json.dumps(dropped[0].to_json()))["reasons"] == [UNALIGNED]


def test_align_filter_keeps_lexical_only_realization():
    only_rel = inst("a", "g", [("objStr", "texas"), ("relStr", "founded")], ["it was founded"])
    kept, dropped = align_filter(Corpus("c", (only_rel,)), AlignPolicy(use_gazetteer=False))
    assert len(kept) == 1 and not dropped


def test_augment_example():
    q1 = inst("q1", "g", [("timepoint", "1792"), ("objStr", "kentucky")], ["kentucky formed in 1792"])
    q2 = inst("q2", "g", [("timepoint", "1845"), ("objStr", "texas")], ["1845"])
    out = {i.id: i for i in augment([q1, q2])}
    assert out["q2"].references == ("1845", "texas formed in 1845")
    assert out["q1"].references == ("kentucky formed in 1792", "1792")
    assert out["q1"].main_reference == "kentucky formed in 1792"


def test_augment_skips_unsatisfiable_and_singletons():
    q1 = inst("q1", "g", [("timepoint", "1792"), ("objStr", "kentucky"), ("claStr", "state")], ["kentucky state in 1792"])
    q2 = inst("q2", "g", [("timepoint", "1845"), ("objStr", "texas")], ["1845"])
    out = {i.id: i for i in augment([q1, q2])}
    assert out["q2"].references == ("1845",)
    assert augment([q1])[0].references == q1.references
    with pytest.raises(ContractError):
        augment([q1, inst("x", "other", [("objStr", "a")], ["a"])])


def test_augment_does_not_transplant_lexical_values():
    q1 = inst("q1", "g", [("objStr", "kentucky"), ("polarity", "yes")], ["yes , kentucky is"])
    q2 = inst("q2", "g", [("objStr", "texas"), ("polarity", "no")], ["no , texas is not"])
    out = {i.id: i for i in augment([q1, q2])}
    assert out["q1"].references == ("yes , kentucky is",)
    assert out["q2"].references == ("no , texas is not",)


def test_augmentation_soundness_on_synthetic():
    corpus = augment_corpus(align_filter(prepare_corpus(synth_corpus(SynthConfig(10, 6, 10), seed=2)))[0])
    for i in corpus:
        own = {tuple(tokenize(s.value)) for s in i.mr.slots}
        for ref in i.references:
            delex, _ = delexicalize(ref, i.mr.slots)
            assert relexicalize(delex, i.mr.slots) == ref
            values = {tuple(tokenize(s.value)) for other in corpus for s in other.mr.slots} - own
            for v in values:
                if len(" ".join(v)) >= 3 and not v[0].isdigit():
                    assert not find_all(tokenize(ref), v), (i.id, ref, v)


def equal_groups(n_groups, size=5):
    return Corpus("eq", tuple(inst(f"{g}-{k}", f"g{g:02d}", [("objStr", f"e{g}x{k}")], [f"e{g}x{k}"])
                              for g in range(n_groups) for k in range(size)))


def test_split_ten_equal_groups():
    train, dev, test = split_by_group(equal_groups(10), seed=4)
    assert (len(train.group_ids), len(dev.group_ids), len(test.group_ids)) == (8, 1, 1)
    assert train.name.endswith(".train")


def test_split_deterministic_and_disjoint():
    c = equal_groups(13, 3)
    a = split_by_group(c, seed=9)
    b = split_by_group(c, seed=9)
    assert [[i.id for i in s] for s in a] == [[i.id for i in s] for s in b]
    sets = [set(s.group_ids) for s in a]
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    assert set.union(*sets) == set(c.group_ids)
    with pytest.raises(ContractError):
        split_by_group(equal_groups(2))
    with pytest.raises(ContractError):
        split_by_group(c, ratios=(0.5, 0.5, 0.5))


@given(st.lists(st.integers(1, 6), min_size=3, max_size=15), st.integers(0, 2**32 - 1))
def test_split_partition_property(sizes, seed):
    c = Corpus("p", tuple(inst(f"{g}-{k}", f"g{g}", [("objStr", "x")], ["x"]) for g, n in enumerate(sizes) for k in range(n)))
    parts = split_by_group(c, seed=seed)
    ids = [i.id for p in parts for i in p]
    assert sorted(ids) == sorted(i.id for i in c)
    sets = [set(p.group_ids) for p in parts]
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])


def test_partitions_ranking_and_nesting():
    c = Corpus("c", (
        inst("1", "g", [("a", "x")], ["x"]),
        inst("2", "g", [("a", "x"), ("b", "y")], ["x y"]),
        inst("3", "g", [("a", "x"), ("c", "z")], ["x z"]),
        inst("4", "g", [("b", "y"), ("c", "z"), ("d", "w")], ["y"]),
    ))
    assert slot_type_ranking(c) == ["a", "b", "c", "d"]
    p1, p2, p3 = make_partitions(c, [1, 2, 4])
    assert [i.id for i in p1] == ["1"]
    assert [i.id for i in p2] == ["1", "2"]
    assert [i.id for i in p3] == ["1", "2", "3", "4"]
    assert p2.name == "c.2"
    with pytest.raises(ContractError):
        make_partitions(c, [5])
    with pytest.raises(ValueError):
        PartitionSpec((3, 2))


def test_partitions_on_large_ontology():
    corpus = synth_corpus(SynthConfig(n_groups=50, instances_per_group=4, n_slot_types=147), seed=0)
    assert len(corpus.ontology) == 147
    parts = make_partitions(corpus, [20, 60, 147])
    assert [len(p.ontology) <= s for p, s in zip(parts, [20, 60, 147])] == [True] * 3
    ids = [set(i.id for i in p) for p in parts]
    assert ids[0] <= ids[1] <= ids[2] and len(ids[2]) == len(corpus)


def test_parse_mr_string_examples():
    mr = parse_mr_string("inform(name='fringale';food='french')")
    assert mr.dialog_act == "inform"
    assert mr.slots == (Slot("name", "fringale"), Slot("food", "french"))
    mr = parse_mr_string("inform(kidsallowed='no';name='red door cafe')")
    assert delexicalize("red door cafe does not allow kids , no", mr.slots)[0] == "NAME_1 does not allow kids , no"
    assert parse_mr_string("confirm(hasinternet)").slots == (Slot("hasinternet", "yes"),)
    with pytest.raises(MRParseError) as err:
        parse_mr_string("inform(")
    assert err.value.position == 7


@given(st.lists(st.tuples(st.sampled_from(["name", "food", "area"]), st.sampled_from(["a b", "c", "d e f"])), max_size=4))
def test_mr_string_round_trip(pairs):
    mr = MeaningRepresentation("inform", tuple(Slot(t, v) for t, v in pairs))
    assert parse_mr_string(format_mr_string(mr)) == mr


def test_corpus_io_round_trip(tmp_path, kentucky_mr):
    c = Corpus("rt", (
        Instance("a", "g1", kentucky_mr, ("1792", "kentucky formed in 1792")),
        inst("b", "g1", [("timepoint", "1845")], ["1845"]),
        inst("c", "g2", [("polarity", "yes"), ("objStr", "texas")], ["yes , texas is"], context="is texas a state"),
    ))
    path = tmp_path / "c.jsonl"
    save_corpus(c, path)
    back = load_corpus(path, name="rt")
    assert back.instances == c.instances
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == ["id", "group_id", "context", "da", "slots", "references"]


def test_sfx_ingestion(tmp_path):
    path = tmp_path / "sfx.jsonl"
    path.write_text(json.dumps({"mr": "inform(name='Fringale';food='french')",
                                "references": ["Fringale serves French food."]}) + "\n")
    c = load_corpus(path, "sfx")
    (i,) = c.instances
    assert i.group_id == i.id == "sfx-1"
    assert i.main_reference == "fringale serves french food ."


def test_corpus_schema_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = {"id": "a", "group_id": "g", "context": None, "da": "inform", "slots": [{"type": "x", "value": "y"}],
            "references": ["y"]}
    bad = dict(good)
    del bad["references"]
    path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(CorpusFormatError) as err:
        load_corpus(path)
    assert err.value.line == 2 and "references" in str(err.value)
    path.write_text("{not json\n")
    with pytest.raises(CorpusFormatError):
        load_corpus(path)


def test_build_vocab_examples():
    assert build_vocab(Corpus("e", ()), "target").tokens == ["<pad>", "<bos>", "<eos>", "<unk>"]
    c = Corpus("v", (inst("1", "g", [("objStr", "q")], ["a a b"]), inst("2", "g", [("objStr", "q")], ["a"])))
    v = build_vocab(c, "target")
    assert v["a"] == 4 and v["b"] == 5 and v["zzz"] == 3
    assert build_vocab(c, "target").tokens == v.tokens
    with pytest.raises(ValueError):
        build_vocab(c, "nope")


def test_synth_determinism_and_validation():
    a = synth_corpus(SynthConfig(5, 4, 8), seed=11)
    b = synth_corpus(SynthConfig(5, 4, 8), seed=11)
    assert a.instances == b.instances
    with pytest.raises(ContractError):
        SynthConfig(n_slot_types=3).validate()


def test_synth_clean_corpus_is_fully_kept():
    c = synth_corpus(SynthConfig(50, 10, 20), seed=0)
    kept, dropped = align_filter(prepare_corpus(c))
    assert len(kept) == 500 and not dropped
    stats = corpus_stats(c)
    assert stats["Size"] == 500 and stats["Slots"] == 20 and stats["DAs"] == 1


def test_synth_noise_is_caught():
    c = synth_corpus(SynthConfig(30, 10, 12, noise_rate=0.2), seed=5)
    kept, dropped = align_filter(prepare_corpus(c))
    assert dropped
    counts = Counter(r for d in dropped for r in d.reasons)
    assert set(counts) <= {UNALIGNED, NO_SLOT}


def test_synth_large_ontology_invariants():
    c = synth_corpus(SynthConfig(n_groups=50, instances_per_group=10, n_slot_types=147), seed=1)
    assert len(c) == 500 and len(c.ontology) == 147
    assert set(c.da_inventory) == {"inform"}
    for i in c:
        assert i.references and all(r == " ".join(tokenize(r)) for r in i.references)
        assert all(s.slot_type in c.ontology for s in i.mr.slots)
