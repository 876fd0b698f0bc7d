"""Mini-batch training with Adam, early stopping and multi-task alternation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import tensor as T
from .data.vocab import Vocab
from .errors import CheckpointError, ContractError
from .model import Batch, Example, ModelConfig, NlgModel, collate, forward_loss, loss_and_accuracy
from .nn import Adam, clip_grad_norm, load_parameters, save_parameters

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 1000
    learning_rate: float = 0.001
    patience: int = 20
    min_delta: float = 1e-5
    clip_norm: Optional[float] = 5.0
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if min(self.batch_size, self.max_epochs, self.patience, self.eval_every) < 1 or self.learning_rate <= 0:
            raise ContractError("training hyperparameters must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ContractError(f"unknown train config keys: {unknown}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: dict[str, float]
    dev_loss: dict[str, float]
    val_loss: float
    train_accuracy: dict[str, float]
    batches: dict[str, int]
    wall_time: float = 0.0


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stop_reason: str = ""
    schedule: list[str] = field(default_factory=list)  # task order of the first epoch's batches

    def to_dict(self, include_wall_time: bool = False) -> dict:
        epochs = []
        for rec in self.epochs:
            d = asdict(rec)
            if not include_wall_time:
                d.pop("wall_time")
            epochs.append(d)
        return {"epochs": epochs, "best_epoch": self.best_epoch, "best_val_loss": self.best_val_loss,
                "stop_reason": self.stop_reason, "schedule": list(self.schedule)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        epochs = [EpochRecord(**e) for e in d.get("epochs", [])]
        return cls(epochs, d.get("best_epoch", 0), d.get("best_val_loss", float("inf")),
                   d.get("stop_reason", ""), list(d.get("schedule", [])))


def make_batches(examples: Sequence[Example], batch_size: int, seed: int, epoch: int, task: Optional[str] = None) -> list[Batch]:
    """Shuffle deterministically by (seed, epoch) and cut into padded batches."""
    if not examples:
        raise ContractError("make_batches: empty dataset")
    order = np.random.default_rng([seed, epoch]).permutation(len(examples))
    task = task or examples[0].task
    return [collate([examples[i] for i in order[s:s + batch_size]], task) for s in range(0, len(order), batch_size)]


def evaluate_loss(model: NlgModel, examples: Sequence[Example], task: str, batch_size: int = 32) -> float:
    """Token-weighted mean cross-entropy over a dataset, without recording gradients."""
    if not examples:
        raise ContractError("evaluate_loss: empty dataset")
    total, tokens = 0.0, 0
    with T.no_grad():
        for s in range(0, len(examples), batch_size):
            batch = collate(examples[s:s + batch_size], task)
            n = batch.n_tokens
            total += forward_loss(model, batch).item() * n
            tokens += n
    return total / tokens


def token_accuracy(model: NlgModel, examples: Sequence[Example], task: str, batch_size: int = 32) -> float:
    correct = total = 0
    with T.no_grad():
        for s in range(0, len(examples), batch_size):
            _, c, n = loss_and_accuracy(model, collate(examples[s:s + batch_size], task))
            correct += c
            total += n
    return correct / total


class EarlyStopping:
    """Stop after ``patience`` evaluations without an improvement of at least ``min_delta``."""

    def __init__(self, patience: int, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch: int, value: float) -> tuple[bool, bool]:
        """Record a validation value; returns (improved, should_stop)."""
        if value < self.best - self.min_delta:
            self.best, self.best_epoch, self.bad = value, epoch, 0
            return True, False
        self.bad += 1
        return False, self.bad >= self.patience


def _interleave(per_task: dict[str, list[Batch]], order: Sequence[str], refill: Callable[[str, int], list[Batch]]) -> list[Batch]:
    """Round-robin over tasks; shorter task lists restart from a reshuffled copy."""
    n = max(len(b) for b in per_task.values())
    pools = {t: list(per_task[t]) for t in order}
    cycles = {t: 0 for t in order}
    out = []
    for i in range(n):
        for t in order:
            if not pools[t]:
                cycles[t] += 1
                pools[t] = refill(t, cycles[t])
            out.append(pools[t].pop(0))
    return out


def train(model: NlgModel, datasets: dict[str, tuple[Sequence[Example], Sequence[Example]]],
          config: TrainConfig | None = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None,
          on_batch: Optional[Callable[[Batch], None]] = None) -> tuple[NlgModel, TrainHistory]:
    """Train in place and restore the best-validation parameters before returning.

    ``on_batch`` runs after every optimizer step with the batch just used.
    """
    config = config or TrainConfig()
    order = list(model.config.tasks)
    for t in order:
        if t not in datasets:
            raise ContractError(f"no dataset for task {t!r}")
        train_set, dev_set = datasets[t]
        if not train_set:
            raise ContractError(f"empty training set for task {t!r}")
        if not dev_set:
            raise ContractError(f"empty dev set for task {t!r}")

    params = model.parameters()
    optimizer = Adam(params, lr=config.learning_rate)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    best_state = {k: v.copy() for k, v in model.state_dict().items()}
    task_seed = {t: config.seed * 1000 + k for k, t in enumerate(order)}

    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        per_task = {t: make_batches(datasets[t][0], config.batch_size, task_seed[t], epoch, t) for t in order}

        def refill(t, cycle, epoch=epoch):
            return make_batches(datasets[t][0], config.batch_size, task_seed[t], epoch * 10007 + cycle, t)

        schedule = _interleave(per_task, order, refill)
        sums = {t: 0.0 for t in order}
        counts = {t: 0 for t in order}
        correct = {t: 0 for t in order}
        tokens = {t: 0 for t in order}
        for batch in schedule:
            optimizer.zero_grad()
            loss, c, n = loss_and_accuracy(model, batch)
            T.backward(loss)
            # parameters untouched by this task's graph still need a (zero) gradient
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            if config.clip_norm:
                clip_grad_norm(params, config.clip_norm)
            _adam_step_touched(optimizer)
            if on_batch is not None:
                on_batch(batch)
            sums[batch.task] += loss.item()
            counts[batch.task] += 1
            correct[batch.task] += c
            tokens[batch.task] += n
        if epoch == 1:
            history.schedule = [b.task for b in schedule]

        if epoch % config.eval_every and epoch != config.max_epochs:
            continue
        dev = {t: evaluate_loss(model, datasets[t][1], t, config.batch_size) for t in order}
        val = float(np.mean([dev[t] for t in order]))
        record = EpochRecord(
            epoch=epoch,
            train_loss={t: sums[t] / counts[t] for t in order},
            dev_loss=dev,
            val_loss=val,
            train_accuracy={t: correct[t] / tokens[t] for t in order},
            batches=dict(counts),
            wall_time=time.perf_counter() - start,
        )
        history.epochs.append(record)
        improved, stop = stopper.update(epoch, val)
        if improved:
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
            history.best_epoch, history.best_val_loss = epoch, val
        logger.info("epoch %d train %s dev %s val %.5f%s", epoch,
                    {t: round(v, 5) for t, v in record.train_loss.items()},
                    {t: round(v, 5) for t, v in dev.items()}, val, " *" if improved else "")
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            history.stop_reason = f"early stopping: no improvement for {config.patience} epochs"
            break
    else:
        history.stop_reason = f"reached max_epochs={config.max_epochs}"

    model.load_state_dict(best_state)
    return model, history


def _adam_step_touched(optimizer: Adam) -> None:
    """Adam step that leaves parameters with an all-zero gradient bit-for-bit unchanged.

    In multi-task training a task's decoder receives no gradient from other
    tasks' batches; its moments and values must not drift on those steps.
    """
    state = optimizer.state
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, m, v in zip(optimizer.params, state.m, state.v):
        g = p.grad
        if not g.any():
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


CHECKPOINT_KIND = "mrnlg-model"


def checkpoint(model: NlgModel, history: Optional[TrainHistory], path) -> None:
    """Write parameters, configuration, vocabularies and history to one file."""
    header = {
        "kind": CHECKPOINT_KIND,
        "code_version": __version__,
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "vocabs": {k: v.tokens for k, v in model.vocabs.items()},
        "history": history.to_dict() if history is not None else None,
    }
    save_parameters(path, model.state_dict(), header)


def restore(path) -> tuple[NlgModel, Optional[TrainHistory]]:
    header, params = load_parameters(path)
    if header.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path}: kind {header.get('kind')!r} is not {CHECKPOINT_KIND!r}")
    for key in ("config", "vocabs", "code_version"):
        if key not in header:
            raise CheckpointError(f"{path}: header lacks field {key!r}")
    if header["code_version"] != __version__:
        raise CheckpointError(f"{path}: code_version {header['code_version']!r} does not match installed {__version__!r}")
    try:
        config = ModelConfig.from_dict(header["config"])
    except (ContractError, TypeError) as exc:
        raise CheckpointError(f"{path}: incompatible model config ({exc})") from exc
    vocabs = {k: Vocab(v) for k, v in header["vocabs"].items()}
    model = NlgModel(config, vocabs)
    try:
        model.load_state_dict(params)
    except ContractError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    history = TrainHistory.from_dict(header["history"]) if header.get("history") else None
    return model, history


def fingerprint_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fingerprint_examples(examples: Sequence[Example]) -> str:
    h = hashlib.sha256()
    for e in examples:
        h.update(json.dumps([e.instance_id, e.streams, e.target], sort_keys=True).encode())
    return h.hexdigest()


def write_manifest(path, entries: dict) -> None:
    """Plain ``key = value`` lines, sorted by key."""
    flat: dict[str, str] = {}

    def walk(prefix, value):
        if isinstance(value, dict):
            for k, v in value.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        else:
            flat[prefix] = json.dumps(value) if not isinstance(value, str) else value

    walk("", dict(entries, code_version=__version__))
    Path(path).write_text("".join(f"{k} = {flat[k]}\n" for k in sorted(flat)), encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out
