import json

import numpy as np
import pytest

from mrnlg import nn
from mrnlg.errors import CheckpointError, ContractError
from mrnlg.model import ModelConfig, NlgModel, build_vocabs, collate, forward_loss, make_examples
from mrnlg.trainer import (
    EarlyStopping,
    TrainConfig,
    TrainHistory,
    _interleave,
    checkpoint,
    evaluate_loss,
    fingerprint_examples,
    make_batches,
    read_manifest,
    restore,
    train,
    write_manifest,
)


def small_setup(corpus, dim=8, seed=0, tasks=("qa",)):
    config = ModelConfig(tasks=tasks, embedding_dim=dim, hidden_dim=dim, seed=seed)
    insts = list(corpus.instances)
    model = NlgModel(config, build_vocabs(config, {t: insts for t in tasks}))
    return model, make_examples(insts, config, model.vocabs, tasks[0])


def test_batch_sizes_cover_dataset(small_corpus):
    _, ex = small_setup(small_corpus)
    ex = (ex * 3)[:70]
    batches = make_batches(ex, 32, seed=0, epoch=1)
    assert [b.size for b in batches] == [32, 32, 6]
    ids = sorted(i for b in batches for i in b.ids)
    assert ids == sorted(e.instance_id for e in ex)


def test_batches_deterministic_per_seed_and_epoch(small_corpus):
    _, ex = small_setup(small_corpus)
    a = [b.ids for b in make_batches(ex, 7, seed=4, epoch=2)]
    assert a == [b.ids for b in make_batches(ex, 7, seed=4, epoch=2)]
    assert a != [b.ids for b in make_batches(ex, 7, seed=4, epoch=3)]
    with pytest.raises(ContractError):
        make_batches([], 4, 0, 1)


def test_interleave_alternates_strictly():
    per_task = {"a": [("a", i) for i in range(100)], "b": [("b", i) for i in range(50)]}
    refills = []

    def refill(task, cycle):
        refills.append((task, cycle))
        return [(task, 1000 * cycle + i) for i in range(50)]

    out = _interleave(per_task, ["a", "b"], refill)
    assert len(out) == 200
    assert [t for t, _ in out] == ["a", "b"] * 100
    assert [i for t, i in out if t == "a"] == list(range(100))
    assert refills == [("b", 1)]


def test_early_stopping_law():
    stopper = EarlyStopping(patience=5, min_delta=0.0)
    values = [3.0, 2.0, 2.5, 2.5, 2.1, 2.2, 2.0, 9.0]
    decisions = [stopper.update(e, v) for e, v in enumerate(values, start=1)]
    assert [d[0] for d in decisions] == [True, True, False, False, False, False, False, False]
    assert decisions[6] == (False, True)
    assert stopper.best_epoch == 2


def test_evaluate_loss_invariant_to_batch_size(small_corpus):
    model, ex = small_setup(small_corpus)
    whole = forward_loss(model, collate(ex)).item()
    for bs in (1, 4, 7, 100):
        assert evaluate_loss(model, ex, "qa", bs) == pytest.approx(whole, rel=1e-10)


def test_train_config_validation():
    with pytest.raises(ContractError):
        TrainConfig(batch_size=0)
    with pytest.raises(ContractError):
        TrainConfig.from_dict({"lr": 0.1})
    assert TrainConfig.from_dict(TrainConfig(patience=3).to_dict()).patience == 3


def test_training_reduces_loss_and_restores_best(small_corpus):
    model, ex = small_setup(small_corpus)
    before = evaluate_loss(model, ex, "qa")
    seen = []
    model, history = train(model, {"qa": (ex, ex)}, TrainConfig(batch_size=8, max_epochs=15, learning_rate=0.01,
                                                               patience=50), on_epoch=seen.append)
    assert len(seen) == 15 and history.stop_reason.startswith("reached")
    dev = [r.dev_loss["qa"] for r in history.epochs]
    assert dev[-1] < dev[0] < before
    assert evaluate_loss(model, ex, "qa") == pytest.approx(history.best_val_loss, rel=1e-12)
    assert history.best_val_loss == min(dev)


def test_training_is_bitwise_deterministic(small_corpus):
    runs = []
    for _ in range(2):
        model, ex = small_setup(small_corpus, dim=4)
        model, history = train(model, {"qa": (ex, ex[:5])}, TrainConfig(batch_size=6, max_epochs=3, seed=7))
        runs.append((model.state_dict(), json.dumps(history.to_dict(), sort_keys=True)))
    (sa, ha), (sb, hb) = runs
    assert ha == hb
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)


def test_early_stopping_halts_training(small_corpus):
    model, ex = small_setup(small_corpus, dim=4)
    # a tiny learning rate with a large min_delta never counts as an improvement after epoch 1
    model, history = train(model, {"qa": (ex, ex)},
                           TrainConfig(batch_size=8, max_epochs=50, learning_rate=1e-6, patience=3, min_delta=1.0))
    assert len(history.epochs) == 4 and history.best_epoch == 1
    assert history.stop_reason.startswith("early stopping")


def test_train_rejects_missing_or_empty_data(small_corpus):
    model, ex = small_setup(small_corpus, dim=4)
    with pytest.raises(ContractError):
        train(model, {}, TrainConfig(max_epochs=1))
    with pytest.raises(ContractError):
        train(model, {"qa": (ex, [])}, TrainConfig(max_epochs=1))


def test_multitask_keeps_other_decoder_fixed_between_its_batches(small_corpus):
    insts = list(small_corpus.instances)
    config = ModelConfig(tasks=("a", "b"), embedding_dim=4, hidden_dim=4)
    data = {"a": insts[:20], "b": insts[20:]}
    model = NlgModel(config, build_vocabs(config, data))
    ex = {t: make_examples(data[t], config, model.vocabs, t) for t in data}
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    model, history = train(model, {t: (ex[t], ex[t]) for t in data}, TrainConfig(batch_size=4, max_epochs=1))
    assert history.schedule[:6] == ["a", "b"] * 3
    assert history.schedule.count("a") == history.schedule.count("b")
    changed = {n for n, p in model.named_parameters() if not np.array_equal(p.data, before[n])}
    assert any(n.startswith("decoders.a.") for n in changed)
    assert any(n.startswith("decoders.b.") for n in changed)


def test_checkpoint_round_trip(tmp_path, small_corpus):
    model, ex = small_setup(small_corpus, dim=4)
    model, history = train(model, {"qa": (ex, ex)}, TrainConfig(batch_size=8, max_epochs=2))
    path = tmp_path / "m.ckpt"
    checkpoint(model, history, path)
    back, hist = restore(path)
    assert back.config == model.config
    assert {k: v.tokens for k, v in back.vocabs.items()} == {k: v.tokens for k, v in model.vocabs.items()}
    assert all(back.state_dict()[k].tobytes() == v.tobytes() for k, v in model.state_dict().items())
    assert hist.to_dict() == history.to_dict()
    first = path.read_bytes()
    checkpoint(back, hist, path)
    assert path.read_bytes() == first


def _rewrite_header(src, dst, **changes):
    header, params = nn.load_parameters(src)
    header.update(changes)
    nn.save_parameters(dst, params, header)


def test_restore_rejects_bad_checkpoints(tmp_path, small_corpus):
    model, _ = small_setup(small_corpus, dim=4)
    path = tmp_path / "m.ckpt"
    checkpoint(model, TrainHistory(), path)
    _rewrite_header(path, tmp_path / "v.ckpt", code_version="0.0.0-other")
    with pytest.raises(CheckpointError, match="code_version"):
        restore(tmp_path / "v.ckpt")
    _rewrite_header(path, tmp_path / "k.ckpt", kind="something-else")
    with pytest.raises(CheckpointError, match="kind"):
        restore(tmp_path / "k.ckpt")
    cfg = model.config.to_dict()
    cfg["hidden_dim"] = 5
    _rewrite_header(path, tmp_path / "c.ckpt", config=cfg)
    with pytest.raises(CheckpointError, match="shape"):
        restore(tmp_path / "c.ckpt")
    raw = path.read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        restore(tmp_path / "t.ckpt")


def test_manifest_is_sorted_and_flat(tmp_path):
    path = tmp_path / "manifest.txt"
    write_manifest(path, {"z": 1, "a": {"b": "x", "c": [1, 2]}})
    lines = path.read_text().splitlines()
    assert lines == sorted(lines)
    m = read_manifest(path)
    assert m["a.b"] == "x" and m["a.c"] == "[1, 2]" and m["z"] == "1" and "code_version" in m


def test_fingerprint_examples_detects_changes(small_corpus):
    _, ex = small_setup(small_corpus)
    assert fingerprint_examples(ex) == fingerprint_examples(list(ex))
    assert fingerprint_examples(ex) != fingerprint_examples(ex[1:])


def test_loss_is_nonnegative_on_random_batches(small_corpus, rng):
    model, ex = small_setup(small_corpus, dim=4)
    for _ in range(5):
        idx = rng.choice(len(ex), size=4, replace=False)
        assert forward_loss(model, collate([ex[i] for i in idx])).item() >= 0
