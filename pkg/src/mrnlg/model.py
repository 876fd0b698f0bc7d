"""Multi-encoder attentional GRU encoder-decoders.

Three layouts are assembled from one configuration:

* A: slot-type / slot-value (/ dialog-act) encoders attended jointly over
  their concatenated outputs;
* B: A plus a previous-utterance encoder with its own attention, the two
  context vectors concatenated;
* C: the encoders (and attention) shared by several tasks, each task with
  its own decoder, output projection and target embedding.
"""

from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import tensor as T
from .data.types import Instance
from .data.vocab import BOS_ID, EOS_ID, PAD_ID, SEP, Vocab, build_vocab, context_tokens, slot_value_tokens, target_tokens
from .errors import ContractError
from .nn import BiGruEncoder, Embedding, GruCell, Linear, LuongAttention, Module, cross_entropy
from .tensor import Tensor

STREAMS = ("slot_types", "slot_values", "dialog_act", "utterance")
MR_STREAMS = ("slot_types", "slot_values", "dialog_act")
UTTERANCE_MODES = ("none", "lex", "delex")


@dataclass(frozen=True)
class ModelConfig:
    encoders: tuple[str, ...] = ("slot_types", "slot_values")
    utterance_mode: str = "none"
    tasks: tuple[str, ...] = ("qa",)
    embedding_dim: int = 50
    hidden_dim: int = 64
    max_decode_len: int = 40
    seed: int = 0
    context_to_output: bool = True
    share_input_embeddings: bool = False

    def __post_init__(self):
        object.__setattr__(self, "encoders", tuple(s for s in STREAMS if s in set(self.encoders)))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        self.validate()

    def validate(self) -> None:
        if self.utterance_mode not in UTTERANCE_MODES:
            raise ContractError(f"utterance_mode must be one of {UTTERANCE_MODES}, got {self.utterance_mode!r}")
        if ("utterance" in self.encoders) != (self.utterance_mode != "none"):
            raise ContractError("the utterance encoder is enabled exactly when utterance_mode is lex or delex")
        if not any(s in MR_STREAMS for s in self.encoders):
            raise ContractError("at least one MR encoder (slot_types, slot_values, dialog_act) is required")
        if not self.tasks or len(set(self.tasks)) != len(self.tasks):
            raise ContractError("tasks must be a nonempty sequence of distinct names")
        if min(self.embedding_dim, self.hidden_dim, self.max_decode_len) < 1:
            raise ContractError("embedding_dim, hidden_dim and max_decode_len must be positive")

    @property
    def architecture(self) -> str:
        if len(self.tasks) > 1:
            return "C"
        return "B" if self.utterance_mode != "none" else "A"

    @property
    def mr_streams(self) -> tuple[str, ...]:
        return tuple(s for s in self.encoders if s in MR_STREAMS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoders"] = list(self.encoders)
        d["tasks"] = list(self.tasks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ContractError(f"unknown model config keys: {unknown}")
        d = dict(d)
        for key in ("encoders", "tasks"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def input_vocab_key(config: ModelConfig, stream: str) -> str:
    return "inputs" if config.share_input_embeddings else stream


def target_vocab_key(task: str) -> str:
    return f"target:{task}"


def stream_tokens(inst: Instance, stream: str, utterance_mode: str = "none") -> list[str]:
    if stream == "slot_types":
        return inst.mr.slot_types
    if stream == "slot_values":
        return slot_value_tokens(inst)
    if stream == "dialog_act":
        return [inst.mr.dialog_act]
    if stream == "utterance":
        return context_tokens(inst, delex=(utterance_mode == "delex"))
    raise ContractError(f"unknown input stream {stream!r}")


_VOCAB_FIELD = {"slot_types": "slot_types", "slot_values": "slot_values", "dialog_act": "da"}


def build_vocabs(config: ModelConfig, corpora: dict[str, Iterable[Instance]]) -> dict[str, Vocab]:
    """Input vocabularies over all tasks' data plus one target vocabulary per task."""
    missing = [t for t in config.tasks if t not in corpora]
    if missing:
        raise ContractError(f"no training data for tasks {missing}")
    everything = [inst for t in config.tasks for inst in corpora[t]]
    vocabs: dict[str, Vocab] = {}
    if config.share_input_embeddings:
        from collections import Counter

        counts: Counter = Counter()
        for inst in everything:
            for s in config.encoders:
                counts.update(stream_tokens(inst, s, config.utterance_mode))
        vocabs["inputs"] = Vocab.from_counts(counts)
    else:
        for s in config.encoders:
            if s == "utterance":
                field_ = "context_delex" if config.utterance_mode == "delex" else "context"
            else:
                field_ = _VOCAB_FIELD[s]
            vocabs[s] = build_vocab(everything, field_)
    for t in config.tasks:
        vocabs[target_vocab_key(t)] = build_vocab(list(corpora[t]), "target")
    return vocabs


@dataclass
class Example:
    task: str
    streams: dict[str, list[int]]
    target: Optional[list[int]] = None
    instance_id: str = ""


def featurize(inst: Instance, config: ModelConfig, vocabs: dict[str, Vocab], task: str,
              reference: Optional[str] = None, with_target: bool = True) -> Example:
    streams = {}
    for s in config.encoders:
        ids = vocabs[input_vocab_key(config, s)].encode(stream_tokens(inst, s, config.utterance_mode))
        streams[s] = ids or [PAD_ID]
    target = None
    if with_target:
        target = vocabs[target_vocab_key(task)].encode(target_tokens(inst, reference))
    return Example(task, streams, target, inst.id)


def make_examples(instances: Iterable[Instance], config: ModelConfig, vocabs: dict[str, Vocab], task: str,
                  all_references: bool = True) -> list[Example]:
    """One example per (instance, reference) pair, or per instance with the main reference."""
    out = []
    for inst in instances:
        refs = inst.references if all_references else (None,)
        for ref in refs:
            out.append(featurize(inst, config, vocabs, task, ref))
    return out


@dataclass
class Batch:
    task: str
    streams: dict[str, np.ndarray]
    masks: dict[str, np.ndarray]
    target_in: Optional[np.ndarray] = None
    target_out: Optional[np.ndarray] = None
    target_mask: Optional[np.ndarray] = None
    ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return next(iter(self.streams.values())).shape[0]

    @property
    def n_tokens(self) -> int:
        return 0 if self.target_mask is None else int(self.target_mask.sum())


def _pad(seqs: Sequence[Sequence[int]], extra: int = 0) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs) + extra
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def collate(examples: Sequence[Example], task: Optional[str] = None) -> Batch:
    if not examples:
        raise ContractError("cannot collate an empty batch")
    task = task or examples[0].task
    names = list(examples[0].streams)
    streams, masks = {}, {}
    for s in names:
        streams[s], masks[s] = _pad([e.streams[s] for e in examples])
    batch = Batch(task, streams, masks, ids=[e.instance_id for e in examples])
    if all(e.target is not None for e in examples):
        B = len(examples)
        width = max(len(e.target) for e in examples) + 1
        tin = np.full((B, width), PAD_ID, dtype=np.int64)
        tout = np.full((B, width), PAD_ID, dtype=np.int64)
        tmask = np.zeros((B, width), dtype=bool)
        for i, e in enumerate(examples):
            n = len(e.target)
            tin[i, 0] = BOS_ID
            tin[i, 1:n + 1] = e.target
            tout[i, :n] = e.target
            tout[i, n] = EOS_ID
            tmask[i, :n + 1] = True
        batch.target_in, batch.target_out, batch.target_mask = tin, tout, tmask
    return batch


class TaskDecoder(Module):
    def __init__(self, vocab_size: int, embedding_dim: int, context_dim: int, summary_dim: int,
                 hidden_dim: int, context_to_output: bool, rng: np.random.Generator):
        self.embedding = Embedding(vocab_size, embedding_dim, rng)
        self.init = Linear(summary_dim, hidden_dim, rng)
        self.cell = GruCell(embedding_dim + context_dim, hidden_dim, rng)
        out_in = hidden_dim + (context_dim if context_to_output else 0)
        self.out = Linear(out_in, vocab_size, rng)


class NlgModel(Module):
    def __init__(self, config: ModelConfig, vocabs: dict[str, Vocab]):
        self.config = config
        self.vocabs = vocabs
        rng = np.random.default_rng(config.seed)
        E, H = config.embedding_dim, config.hidden_dim
        if config.share_input_embeddings:
            self.emb_inputs = Embedding(len(vocabs["inputs"]), E, rng)
        for s in config.encoders:
            if not config.share_input_embeddings:
                setattr(self, f"emb_{s}", Embedding(len(vocabs[s]), E, rng))
            setattr(self, f"enc_{s}", BiGruEncoder(E, H, rng))
        self.attn_mr = LuongAttention(H, 2 * H, rng)
        self.use_utterance = config.utterance_mode != "none"
        if self.use_utterance:
            self.attn_utt = LuongAttention(H, 2 * H, rng)
        context_dim = 2 * H * (2 if self.use_utterance else 1)
        self.decoders = {
            t: TaskDecoder(len(vocabs[target_vocab_key(t)]), E, context_dim, 2 * H, H, config.context_to_output, rng)
            for t in config.tasks
        }

    def embedding_for(self, stream: str) -> Embedding:
        return self.emb_inputs if self.config.share_input_embeddings else getattr(self, f"emb_{stream}")

    def encoder_for(self, stream: str) -> BiGruEncoder:
        return getattr(self, f"enc_{stream}")

    def decoder_for(self, task: str) -> TaskDecoder:
        if task not in self.decoders:
            raise ContractError(f"unknown task {task!r}; model has {list(self.decoders)}")
        return self.decoders[task]

    def target_vocab(self, task: str) -> Vocab:
        return self.vocabs[target_vocab_key(task)]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ContractError(f"parameter mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, p in own.items():
            if p.data.shape != state[name].shape:
                raise ContractError(f"shape mismatch for {name}: {p.data.shape} vs {state[name].shape}")
            p.data[...] = state[name]


@dataclass
class Encoded:
    mr_keys: Tensor
    mr_mask: np.ndarray
    summary: Tensor
    utt_keys: Optional[Tensor] = None
    utt_mask: Optional[np.ndarray] = None


def encode_inputs(model: NlgModel, batch: Batch) -> Encoded:
    config = model.config
    if set(batch.streams) != set(config.encoders):
        raise ContractError(f"batch streams {sorted(batch.streams)} do not match encoders {list(config.encoders)}")
    states, finals, masks = {}, {}, {}
    for s in config.encoders:
        ids, mask = batch.streams[s], batch.masks[s]
        emb = model.embedding_for(s)
        inputs = [emb(ids[:, t]) for t in range(ids.shape[1])]
        states[s], finals[s] = model.encoder_for(s)(inputs, mask)
        masks[s] = mask
    mr = config.mr_streams
    mr_keys = states[mr[0]] if len(mr) == 1 else T.concat([states[s] for s in mr], axis=1)
    mr_mask = np.concatenate([masks[s] for s in mr], axis=1)
    summary = finals[mr[0]]
    for s in mr[1:]:
        summary = summary + finals[s]
    if len(mr) > 1:
        summary = T.scale(summary, 1.0 / len(mr))
    enc = Encoded(mr_keys, mr_mask, summary)
    if model.use_utterance:
        enc.utt_keys, enc.utt_mask = states["utterance"], masks["utterance"]
    return enc


def initial_state(model: NlgModel, task: str, enc: Encoded) -> Tensor:
    return model.decoder_for(task).init(enc.summary)


def decoder_step(model: NlgModel, task: str, y_prev, h_prev: Tensor, enc: Encoded) -> tuple[Tensor, Tensor, Tensor]:
    """One decoding step; returns (logits [B x V], next state, MR attention weights)."""
    dec = model.decoder_for(task)
    c_mr, w_mr = model.attn_mr(h_prev, enc.mr_keys, enc.mr_mask)
    contexts = [c_mr]
    if model.use_utterance:
        c_utt, _ = model.attn_utt(h_prev, enc.utt_keys, enc.utt_mask)
        contexts.append(c_utt)
    x = T.concat([dec.embedding(np.asarray(y_prev, dtype=np.int64))] + contexts, axis=1)
    h = dec.cell(x, h_prev)
    features = T.concat([h] + contexts, axis=1) if model.config.context_to_output else h
    return dec.out(features), h, w_mr


def unroll(model: NlgModel, batch: Batch) -> Tensor:
    """Teacher-forced logits for every target position, stacked step-major [(T*B) x V]."""
    if batch.target_in is None:
        raise ContractError("batch has no targets")
    enc = encode_inputs(model, batch)
    h = initial_state(model, batch.task, enc)
    steps = []
    for t in range(batch.target_in.shape[1]):
        logits, h, _ = decoder_step(model, batch.task, batch.target_in[:, t], h, enc)
        steps.append(logits)
    return T.concat(steps, axis=0)


def _step_major(a: np.ndarray) -> np.ndarray:
    return a.T.reshape(-1)


def forward_loss(model: NlgModel, batch: Batch) -> Tensor:
    logits = unroll(model, batch)
    return cross_entropy(logits, _step_major(batch.target_out), _step_major(batch.target_mask))


def loss_and_accuracy(model: NlgModel, batch: Batch) -> tuple[Tensor, int, int]:
    """Loss plus (correct, total) teacher-forced argmax token counts."""
    logits = unroll(model, batch)
    targets, mask = _step_major(batch.target_out), _step_major(batch.target_mask)
    loss = cross_entropy(logits, targets, mask)
    pred = logits.data.argmax(axis=1)
    return loss, int(((pred == targets) & mask).sum()), int(mask.sum())


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


StepFn = Callable[[object, int], tuple[np.ndarray, object]]


def greedy_search(step: StepFn, state, max_len: int, bos: int = BOS_ID, eos: int = EOS_ID) -> tuple[list[int], float]:
    """Argmax decoding (ties to the lowest id); returns tokens without EOS and the length-normalized log-prob."""
    tokens: list[int] = []
    total = 0.0
    prev = bos
    for _ in range(max_len):
        logp, state = step(state, prev)
        tok = int(np.argmax(logp))
        total += float(logp[tok])
        if tok == eos:
            return tokens, total / (len(tokens) + 1)
        tokens.append(tok)
        prev = tok
    return tokens, total / max(1, len(tokens))


def beam_search(step: StepFn, state, beam_width: int, max_len: int, bos: int = BOS_ID,
                eos: int = EOS_ID) -> list[tuple[list[int], float]]:
    """Beam search ranked by length-normalized log-probability.

    Hypotheses retire at EOS or at ``max_len`` tokens.  The greedy hypothesis
    is always among the candidates, so the best returned score is never below
    greedy's.
    """
    if beam_width < 1:
        raise ContractError("beam_width must be at least 1")
    finished: dict[tuple[int, ...], float] = {}
    greedy_tokens, greedy_score = greedy_search(step, state, max_len, bos, eos)
    finished[tuple(greedy_tokens)] = greedy_score

    live = [((), 0.0, state)]
    for depth in range(max_len):
        candidates = []
        for tokens, score, st in live:
            logp, new_state = step(st, tokens[-1] if tokens else bos)
            for tok in heapq.nlargest(beam_width, range(len(logp)), key=lambda i: (logp[i], -i)):
                candidates.append((tokens, tok, score + float(logp[tok]), new_state))
        candidates.sort(key=lambda c: (-c[2], c[0] + (c[1],)))
        live = []
        for tokens, tok, score, st in candidates[:beam_width]:
            if tok == eos:
                key = tokens
                norm = score / (len(tokens) + 1)
            else:
                key = tokens + (tok,)
                if len(key) >= max_len:
                    norm = score / len(key)
                else:
                    live.append((key, score, st))
                    continue
            if key not in finished or norm > finished[key]:
                finished[key] = norm
        if not live:
            break
    ranked = sorted(finished.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(list(k), v) for k, v in ranked]


def _instance_step_fn(model: NlgModel, task: str, enc: Encoded) -> StepFn:
    def step(h, token):
        logits, h_next, _ = decoder_step(model, task, np.array([token]), h, enc)
        return _log_softmax(logits.data[0]), h_next

    return step


def _encode_single(model: NlgModel, inst: Instance, task: str) -> Encoded:
    ex = featurize(inst, model.config, model.vocabs, task, with_target=False)
    return encode_inputs(model, collate([ex], task))


def decode_greedy(model: NlgModel, task: str, instance: Instance, max_len: Optional[int] = None) -> list[str]:
    max_len = model.config.max_decode_len if max_len is None else max_len
    with T.no_grad():
        enc = _encode_single(model, instance, task)
        tokens, _ = greedy_search(_instance_step_fn(model, task, enc), initial_state(model, task, enc), max_len)
    return model.target_vocab(task).decode(tokens)


def decode_beam(model: NlgModel, task: str, instance: Instance, beam_width: int,
                max_len: Optional[int] = None) -> list[tuple[list[str], float]]:
    if beam_width < 1:
        raise ContractError("beam_width must be at least 1")
    max_len = model.config.max_decode_len if max_len is None else max_len
    with T.no_grad():
        enc = _encode_single(model, instance, task)
        hyps = beam_search(_instance_step_fn(model, task, enc), initial_state(model, task, enc), beam_width, max_len)
    vocab = model.target_vocab(task)
    return [(vocab.decode(toks), score) for toks, score in hyps]


def generate_batch(model: NlgModel, task: str, examples: Sequence[Example], max_len: Optional[int] = None) -> list[list[int]]:
    """Greedy decoding of many examples at once; identical to per-instance greedy."""
    max_len = model.config.max_decode_len if max_len is None else max_len
    with T.no_grad():
        batch = collate(examples, task)
        enc = encode_inputs(model, batch)
        h = initial_state(model, task, enc)
        B = batch.size
        prev = np.full(B, BOS_ID, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        out: list[list[int]] = [[] for _ in range(B)]
        for _ in range(max_len):
            logits, h, _ = decoder_step(model, task, prev, h, enc)
            tok = logits.data.argmax(axis=1)
            for i in range(B):
                if not done[i]:
                    if tok[i] == EOS_ID:
                        done[i] = True
                    else:
                        out[i].append(int(tok[i]))
            if done.all():
                break
            prev = np.where(done, PAD_ID, tok)
    return out


__all__ = [
    "Batch", "Encoded", "Example", "ModelConfig", "NlgModel", "SEP", "STREAMS", "TaskDecoder", "beam_search",
    "build_vocabs", "collate", "decode_beam", "decode_greedy", "decoder_step", "encode_inputs", "featurize",
    "forward_loss", "generate_batch", "greedy_search", "initial_state", "loss_and_accuracy", "make_examples",
    "stream_tokens", "unroll",
]
