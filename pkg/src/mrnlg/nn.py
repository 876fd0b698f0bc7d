"""Layers, loss and optimizer for the GRU encoder-decoder models.

All layers accept batched inputs ([batch x dim]).  Where a functional
helper takes a single vector (``gru_step``, ``attend``, ``encode``) it is
promoted to a batch of one and the result squeezed back.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ContractError, ShapeError
from .tensor import Tensor

INIT_SCALE = 0.08


def uniform_init(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Module:
    """Parameter container; attribute order defines parameter path order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, dict):
                for key, sub in value.items():
                    if isinstance(sub, Module):
                        yield from sub.named_parameters(f"{path}.{key}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int = 50, rng: np.random.Generator | None = None):
        if vocab_size < 1:
            raise ContractError("vocab_size must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.table = uniform_init(rng, (vocab_size, dim))

    def __call__(self, ids) -> Tensor:
        return T.take_rows(self.table, ids)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None, bias: bool = True):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = uniform_init(rng, (out_dim, in_dim))
        self.b = zeros_param((out_dim,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.W, self.b)


class GruCell(Module):
    """Single GRU cell, one bias per gate.

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    c = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * c + z * h
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W_z = uniform_init(rng, (hidden_dim, input_dim))
        self.W_r = uniform_init(rng, (hidden_dim, input_dim))
        self.W_h = uniform_init(rng, (hidden_dim, input_dim))
        self.U_z = uniform_init(rng, (hidden_dim, hidden_dim))
        self.U_r = uniform_init(rng, (hidden_dim, hidden_dim))
        self.U_h = uniform_init(rng, (hidden_dim, hidden_dim))
        self.b_z = zeros_param((hidden_dim,))
        self.b_r = zeros_param((hidden_dim,))
        self.b_h = zeros_param((hidden_dim,))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.ndim != 2 or h.ndim != 2 or x.shape[0] != h.shape[0]:
            raise ShapeError(f"gru: batched input {x.shape} and state {h.shape} disagree")
        if x.shape[1] != self.input_dim or h.shape[1] != self.hidden_dim:
            raise ShapeError(
                f"gru: expected input dim {self.input_dim} and hidden dim {self.hidden_dim}, "
                f"got {x.shape} and {h.shape}"
            )
        z = T.sigmoid(T.linear(x, self.W_z, self.b_z) + T.linear(h, self.U_z))
        r = T.sigmoid(T.linear(x, self.W_r, self.b_r) + T.linear(h, self.U_r))
        cand = T.tanh(T.linear(x, self.W_h, self.b_h) + T.linear(T.mul(r, h), self.U_h))
        return cand + T.mul(z, h - cand)


def gru_step(cell: GruCell, x_t: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU step; accepts single vectors or batches."""
    if x_t.ndim == 1 and h_prev.ndim == 1:
        out = cell(T.reshape(x_t, (1, x_t.shape[0])), T.reshape(h_prev, (1, h_prev.shape[0])))
        return T.reshape(out, (cell.hidden_dim,))
    return cell(x_t, h_prev)


class BiGruEncoder(Module):
    """One-layer bidirectional GRU over a padded batch.

    Padded steps leave the running state untouched, so the backward pass
    starts from zero at each sequence's true last token and the forward
    final state is the state after the last real token.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.forward_cell = GruCell(input_dim, hidden_dim, rng)
        self.backward_cell = GruCell(input_dim, hidden_dim, rng)
        self.hidden_dim = hidden_dim

    def __call__(self, inputs: list[Tensor], mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Encode ``T`` inputs of shape [B x in].

        Returns states [B x T x 2H] and the final summary [B x 2H]
        (forward state after the last token, backward state at position 0).
        """
        if not inputs:
            raise ContractError("encode: empty input sequence")
        B = inputs[0].shape[0]
        H = self.hidden_dim
        steps = len(inputs)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (B, steps):
                raise ShapeError(f"encode: mask {mask.shape} does not match batch {B} x {steps}")
            step_masks = [None if mask[:, t].all() else np.repeat(mask[:, t:t + 1], H, axis=1) for t in range(steps)]
        else:
            step_masks = [None] * steps

        h = Tensor(np.zeros((B, H)))
        fwd = []
        for t in range(steps):
            new = self.forward_cell(inputs[t], h)
            h = new if step_masks[t] is None else T.where(step_masks[t], new, h)
            fwd.append(h)
        fwd_final = h

        h = Tensor(np.zeros((B, H)))
        bwd = [None] * steps
        for t in reversed(range(steps)):
            new = self.backward_cell(inputs[t], h)
            h = new if step_masks[t] is None else T.where(step_masks[t], new, h)
            bwd[t] = h
        bwd_final = h

        rows = [T.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]
        states = T.stack(rows, axis=1)
        return states, T.concat([fwd_final, bwd_final], axis=1)


def encode(encoder: BiGruEncoder, embedded: list[Tensor]) -> Tensor:
    """Encode an unbatched sequence of vectors into a [T x 2H] state matrix."""
    if not embedded:
        raise ContractError("encode: empty input sequence")
    batched = [T.reshape(e, (1, e.shape[0])) for e in embedded]
    states, _ = encoder(batched)
    return T.reshape(states, (len(embedded), 2 * encoder.hidden_dim))


class LuongAttention(Module):
    """Luong "general" attention: score(q, k) = q^T W_a k."""

    def __init__(self, query_dim: int, key_dim: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W_a = uniform_init(rng, (query_dim, key_dim))

    def __call__(self, query: Tensor, keys: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Batched attention: query [B x Q], keys [B x S x K] -> context [B x K], weights [B x S]."""
        if query.ndim != 2 or keys.ndim != 3 or query.shape[0] != keys.shape[0]:
            raise ShapeError(f"attend: query {query.shape} and keys {keys.shape} disagree")
        B, S, K = keys.shape
        if query.shape[1] != self.W_a.shape[0] or K != self.W_a.shape[1]:
            raise ShapeError(f"attend: W_a {self.W_a.shape} does not fit query {query.shape} / keys {keys.shape}")
        projected = T.matmul(query, self.W_a)
        scores = T.reshape(T.matmul(keys, T.reshape(projected, (B, K, 1))), (B, S))
        weights = T.softmax(scores, axis=1, mask=mask)
        context = T.reshape(T.matmul(T.reshape(weights, (B, 1, S)), keys), (B, K))
        return context, weights


def attend(attn: LuongAttention, query: Tensor, keys: Tensor) -> tuple[Tensor, Tensor]:
    """Unbatched attention: query [Q], keys [S x K] -> (context [K], weights [S])."""
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ShapeError(f"attend: keys must be a non-empty matrix, got {keys.shape}")
    S, K = keys.shape
    context, weights = attn(T.reshape(query, (1, query.shape[0])), T.reshape(keys, (1, S, K)))
    return T.reshape(context, (K,)), T.reshape(weights, (S,))


def cross_entropy(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood over unmasked rows of ``logits`` [N x V]."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [N x V] logits, got {logits.shape}")
    N, V = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (N,):
        raise ShapeError(f"cross_entropy: {targets.shape[0] if targets.ndim else 0} targets for {N} rows")
    mask = np.ones(N, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise ContractError("cross_entropy: all positions are masked")
    if ((targets < 0) | (targets >= V))[mask].any():
        raise IndexError(f"cross_entropy: target id out of range for vocabulary of {V}")
    safe = np.where(mask, targets, 0)
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(N)
    nll = lse - shifted[rows, safe]
    loss = float(nll[mask].sum() / n_valid)

    def _bw(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, safe] -= 1.0
        p *= (mask / n_valid)[:, None]
        return (p * float(g),)

    return Tensor.from_op(np.array(loss), (logits,), _bw, "cross_entropy")


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: list[Tensor], lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps, 0, [np.zeros_like(p.data) for p in self.params],
                               [np.zeros_like(p.data) for p in self.params])

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.state)


def adam_step(params: list[Tensor], state: AdamState) -> None:
    missing = [i for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise ContractError(f"adam_step: parameters {missing} have no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    """Rescale gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(np.sum([np.sum(g * g) for g in grads]))) if grads else 0.0
    if total > max_norm > 0:
        factor = max_norm / total
        for g in grads:
            g *= factor
    return total


MAGIC = b"MRNLG-PARAMS\n"
FORMAT_VERSION = 1


def save_parameters(path, params: dict[str, np.ndarray], header: dict) -> None:
    """Write a header plus raw little-endian float64 arrays.

    Layout: magic line, 8-byte header length, UTF-8 JSON header, payload.
    The header lists each parameter's path, shape and byte offset.
    """
    index = []
    offset = 0
    for name, arr in params.items():
        n = int(np.prod(arr.shape))
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += n * 8
    full = dict(header)
    full["format_version"] = FORMAT_VERSION
    full["parameters"] = index
    blob = json.dumps(full, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_parameters(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a parameter archive (bad magic)")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    if not isinstance(header, dict) or "parameters" not in header:
        raise CheckpointError(f"{path}: header lacks a parameter index")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {header.get('format_version')!r} != supported {FORMAT_VERSION}"
        )
    payload = raw[pos + hlen:]
    params = {}
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        start = entry["offset"]
        chunk = payload[start:start + 8 * n]
        if len(chunk) != 8 * n:
            raise CheckpointError(f"{path}: payload truncated at parameter {entry['name']}")
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
    return header, params
