"""Embedding, LSTM, bidirectional encoder, affine map and dot-product attention.

LSTM gates are packed in the order (input, forget, cell, output) along the
first axis of ``W`` (4H x in), ``U`` (4H x H) and ``b`` (4H).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, concat, emit, matmul, mul, sigmoid, softmax,
                       take_rows, tanh, transpose, _sigmoid)
from .errors import ContractError, ShapeError, VocabularyError

GATE_ORDER = ("input", "forget", "cell", "output")


@dataclass
class LstmParams:
    W: Tensor
    U: Tensor
    b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> dict:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero bias except forget gate = 1."""
    bound = 1.0 / np.sqrt(hidden_dim)
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim:2 * hidden_dim] = 1.0
    return {
        "W": rng.uniform(-bound, bound, (4 * hidden_dim, input_dim)),
        "U": rng.uniform(-bound, bound, (4 * hidden_dim, hidden_dim)),
        "b": b,
    }


def init_linear(in_dim: int, out_dim: int, hidden_dim: int, rng: np.random.Generator) -> dict:
    bound = 1.0 / np.sqrt(hidden_dim)
    return {"W": rng.uniform(-bound, bound, (out_dim, in_dim)), "b": np.zeros(out_dim)}


def init_embedding(vocab_size: int, embed_dim: int, hidden_dim: int,
                   rng: np.random.Generator) -> np.ndarray:
    bound = 1.0 / np.sqrt(hidden_dim)
    return rng.uniform(-bound, bound, (vocab_size, embed_dim))


def embed(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` for each token id, as a T x embed_dim matrix."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)][0]
        raise VocabularyError(f"token id {bad} outside vocabulary of size {vocab}")
    return take_rows(table, ids)


def lstm_step(p: LstmParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM cell update composed from tape primitives."""
    H = p.hidden_dim
    if x_t.shape != (p.input_dim,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(f"lstm_step: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
                         f"do not fit input_dim={p.input_dim}, hidden_dim={H}")
    z = matmul(p.W, x_t) + matmul(p.U, h_prev) + p.b
    i = sigmoid(z[0:H])
    f = sigmoid(z[H:2 * H])
    g = tanh(z[2 * H:3 * H])
    o = sigmoid(z[3 * H:4 * H])
    c_t = mul(f, c_prev) + mul(i, g)
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


def lstm_sequence(p: LstmParams, xs: Tensor, h0: Tensor | None = None,
                  c0: Tensor | None = None) -> Tensor:
    """Run the cell over the rows of ``xs``; returns all hidden states (T x H).

    Recorded as a single tape node with a hand-written backpropagation-through-
    time adjoint.  Agrees with iterating :func:`lstm_step`.
    """
    W, U, b = p.W.data, p.U.data, p.b.data
    H = U.shape[1]
    X = xs.data
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise ShapeError(f"lstm_sequence: inputs {xs.shape} do not fit W {p.W.shape}")
    T = X.shape[0]
    if T == 0:
        raise ContractError("lstm_sequence needs at least one step")
    h = np.zeros(H) if h0 is None else h0.data
    c = np.zeros(H) if c0 is None else c0.data
    zx = X @ W.T + b
    hs = np.empty((T, H))
    h_prev = np.empty((T, H))
    c_prev = np.empty((T, H))
    gates = np.empty((T, 4 * H))
    tanh_c = np.empty((T, H))
    for t in range(T):
        h_prev[t] = h
        c_prev[t] = c
        z = zx[t] + U @ h
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:] = i, f, g, o
        tanh_c[t] = tc
        hs[t] = h

    def vjp(G):
        dZ = np.empty((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
            tc = tanh_c[t]
            dh = G[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dZ[t, :H] = dc * g * i * (1.0 - i)
            dZ[t, H:2 * H] = dc * c_prev[t] * f * (1.0 - f)
            dZ[t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dZ[t, 3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dZ[t] @ U
        return (dZ.T @ X, dZ.T @ h_prev, dZ.sum(axis=0), dZ @ W, dh_next, dc_next)

    parents = (p.W, p.U, p.b, xs,
               h0 if h0 is not None else Tensor(np.zeros(H)),
               c0 if c0 is not None else Tensor(np.zeros(H)))
    return emit(hs, parents, vjp)


def bilstm_encode(fwd: LstmParams, bwd: LstmParams, xs: Tensor) -> tuple[Tensor, Tensor]:
    """Bidirectional pass over ``xs`` (T x in).

    Returns per-step outputs ``[h_fwd[t]; h_bwd[t]]`` (T x 2H) and the final
    summary ``[h_fwd[T-1]; h_bwd[0]]`` where ``h_bwd[0]`` is the backward
    direction's state after reading the whole reversed sequence.
    """
    if xs.shape[0] == 0:
        raise ContractError("cannot encode an empty sequence")
    hf = lstm_sequence(fwd, xs)
    hb = lstm_sequence(bwd, xs[::-1])[::-1]
    outputs = concat([hf, hb], axis=1)
    final = concat([hf[-1], hb[0]])
    return outputs, final


def linear(W: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """``W x + b`` for a vector, or row-wise ``x W^T + b`` for a matrix."""
    Wd, bd, xd = W.data, b.data, x.data
    if xd.shape[-1] != Wd.shape[1] or bd.shape != (Wd.shape[0],) or xd.ndim not in (1, 2):
        raise ShapeError(f"linear: W {W.shape}, b {b.shape}, x {x.shape} are incompatible")
    if xd.ndim == 1:
        out = Wd @ xd + bd
        vjp = lambda g: (np.outer(g, xd), g, g @ Wd)
    else:
        out = xd @ Wd.T + bd
        vjp = lambda g: (g.T @ xd, g.sum(axis=0), g @ Wd)
    return emit(out, (W, b, x), vjp)


def dot_attention(encoder_outputs: Tensor, query: Tensor) -> tuple[Tensor, Tensor]:
    """Dot-product attention of ``query`` over the rows of ``encoder_outputs``.

    ``query`` may be a single hidden state (H,) or one per decoder step
    (T' x H); weights and contexts gain a leading axis in the latter case.
    """
    if encoder_outputs.shape[0] == 0:
        raise ContractError("attention over an empty sequence")
    if query.shape[-1] != encoder_outputs.shape[1]:
        raise ShapeError(f"attention: query {query.shape} vs encoder outputs {encoder_outputs.shape}")
    scores = matmul(query, transpose(encoder_outputs))
    weights = softmax(scores)
    context = matmul(weights, encoder_outputs)
    return context, weights
