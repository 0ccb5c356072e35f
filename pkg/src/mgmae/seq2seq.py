"""Bidirectional-LSTM encoder, attention decoder, and their training loops.

The encoder embeds the source, runs a bidirectional LSTM and projects every
2H-dimensional output (and the final forward/backward summary) down to H
with one shared affine map.  The projected summary is the sentence
representation; it also seeds the decoder's hidden state (cell state starts
at zero).

Each decoder step embeds the previous token, advances the LSTM, attends over
the projected encoder outputs, mixes ``[h; context]`` through ``tanh`` of an
affine map (the attentional hidden state) and projects to vocabulary
log-probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import layers
from .autodiff import Tape, Tensor, backward, concat, dropout, log_softmax, tanh
from .data import EOS, PAD, SOS
from .errors import ContractError, TrainingError
from .layers import LstmParams, bilstm_encode, dot_attention, embed, linear, lstm_sequence, lstm_step
from .metrics import nll_loss
from .optim import Adam, clip_global_norm

CLIP_NORM = 5.0


def bind(params: dict, tape: Tape | None = None) -> dict:
    """Tensors for a parameter dict: tape leaves when ``tape`` is given, constants otherwise."""
    if tape is None:
        return {k: Tensor(v) for k, v in params.items()}
    return {k: tape.leaf(v) for k, v in params.items()}


def _lstm(p: dict, prefix: str) -> LstmParams:
    return LstmParams(p[prefix + ".W"], p[prefix + ".U"], p[prefix + ".b"])


class Encoder:
    def __init__(self, vocab_size: int, embed_dim: int = 150, hidden_dim: int = 200,
                 dropout: float = 0.2, seed: int = 0, params: dict | None = None):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        if params is None:
            rng = np.random.default_rng(seed)
            params = {"embedding": layers.init_embedding(vocab_size, embed_dim, hidden_dim, rng)}
            for d in ("fwd", "bwd"):
                for k, v in layers.init_lstm(embed_dim, hidden_dim, rng).items():
                    params[f"{d}.{k}"] = v
            for k, v in layers.init_linear(2 * hidden_dim, hidden_dim, hidden_dim, rng).items():
                params[f"proj.{k}"] = v
        self.params = params

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim, "dropout": self.dropout}

    def copy(self) -> "Encoder":
        return Encoder(**self.config(), params={k: v.copy() for k, v in self.params.items()})


class Decoder:
    def __init__(self, vocab_size: int, embed_dim: int = 150, hidden_dim: int = 200,
                 dropout: float = 0.2, seed: int = 0, params: dict | None = None):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        if params is None:
            rng = np.random.default_rng(seed)
            params = {"embedding": layers.init_embedding(vocab_size, embed_dim, hidden_dim, rng)}
            for k, v in layers.init_lstm(embed_dim, hidden_dim, rng).items():
                params[f"lstm.{k}"] = v
            for k, v in layers.init_linear(2 * hidden_dim, hidden_dim, hidden_dim, rng).items():
                params[f"combine.{k}"] = v
            for k, v in layers.init_linear(hidden_dim, vocab_size, hidden_dim, rng).items():
                params[f"out.{k}"] = v
        self.params = params

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim, "dropout": self.dropout}

    def copy(self) -> "Decoder":
        return Decoder(**self.config(), params={k: v.copy() for k, v in self.params.items()})


@dataclass
class EncoderOutput:
    outputs: Tensor         # T x H, projected
    representation: Tensor  # H, projected final summary


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    prev_token: int


# -- forward passes -------------------------------------------------------------

def _check_source(tokens):
    if len(tokens) == 0:
        raise ContractError("cannot encode an empty token sequence")
    if tokens[-1] != EOS:
        raise ContractError("source sequence must end with EOS")


def encoder_forward(p: dict, tokens, rate: float = 0.0, rng=None, training: bool = False) -> EncoderOutput:
    _check_source(tokens)
    x = dropout(embed(p["embedding"], tokens), rate, rng, training)
    outs, final = bilstm_encode(_lstm(p, "fwd"), _lstm(p, "bwd"), x)
    return EncoderOutput(linear(p["proj.W"], p["proj.b"], outs),
                         linear(p["proj.W"], p["proj.b"], final))


def encode(enc: Encoder, tokens) -> EncoderOutput:
    """Evaluation-mode encoding (no dropout, nothing recorded)."""
    return encoder_forward(bind(enc.params), list(tokens))


def _attend_and_project(p: dict, hs: Tensor, enc_outputs: Tensor) -> Tensor:
    context, _ = dot_attention(enc_outputs, hs)
    axis = 0 if hs.data.ndim == 1 else 1
    mixed = tanh(linear(p["combine.W"], p["combine.b"], concat([hs, context], axis=axis)))
    return log_softmax(linear(p["out.W"], p["out.b"], mixed))


def decoder_forward(p: dict, enc_out: EncoderOutput, target, rate: float = 0.0,
                    rng=None, training: bool = False) -> Tensor:
    """Teacher-forced log-probabilities (len(target) x vocab); inputs are SOS + target[:-1]."""
    inputs = [SOS] + list(target[:-1])
    x = dropout(embed(p["embedding"], inputs), rate, rng, training)
    hs = lstm_sequence(_lstm(p, "lstm"), x, h0=enc_out.representation)
    hs = dropout(hs, rate, rng, training)
    return _attend_and_project(p, hs, enc_out.outputs)


def initial_state(enc_out: EncoderOutput) -> DecoderState:
    H = enc_out.representation.shape[0]
    return DecoderState(enc_out.representation, Tensor(np.zeros(H)), SOS)


def decode_step(dec: Decoder | dict, state: DecoderState, enc_out: EncoderOutput):
    """One evaluation-mode decoder step; returns (log_probs over vocab, next state)."""
    p = bind(dec.params) if isinstance(dec, Decoder) else dec
    x = embed(p["embedding"], [state.prev_token])[0]
    h, c = lstm_step(_lstm(p, "lstm"), x, state.h, state.c)
    log_probs = _attend_and_project(p, h, enc_out.outputs)
    return log_probs, DecoderState(h, c, state.prev_token)


def choose_token(log_probs: np.ndarray) -> int:
    """Argmax with PAD and SOS excluded; ties go to the lowest id."""
    scores = np.array(log_probs, dtype=np.float64)
    scores[[PAD, SOS]] = -np.inf
    return int(np.argmax(scores))


def greedy_decode(dec: Decoder, enc_out: EncoderOutput, max_len: int) -> list[int]:
    """Token ids up to (excluding) EOS, at most ``max_len`` of them."""
    if max_len < 1:
        raise ContractError("max_len must be at least 1")
    p = bind(dec.params)
    state = initial_state(enc_out)
    out = []
    for _ in range(max_len):
        log_probs, state = decode_step(p, state, enc_out)
        tok = choose_token(log_probs.data)
        if tok == EOS:
            break
        out.append(tok)
        state.prev_token = tok
    return out


def default_max_len(targets) -> int:
    """1.5x the longest target (EOS excluded), at least 20."""
    longest = max((len(t) - (1 if t and t[-1] == EOS else 0) for t in targets), default=0)
    return max(20, math.ceil(1.5 * longest))


def extract_representations(enc: Encoder, sources) -> np.ndarray:
    """N x H matrix of evaluation-mode representations, row i for ``sources[i]``."""
    return np.stack([encode(enc, s).representation.data for s in sources])


# -- training -----------------------------------------------------------------------

def _fit(params: dict, loss_fn, n_items: int, epochs: int, lr: float, seed: int) -> list[float]:
    """Per-item Adam updates over ``params`` (flat name -> array), shuffled each epoch."""
    if n_items == 0:
        raise ContractError("cannot train on an empty corpus")
    opt = Adam(params, lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        total_loss = 0.0
        for idx in rng.permutation(n_items):
            tape = Tape()
            bound = bind(params, tape)
            loss = loss_fn(bound, int(idx), rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, sample {int(idx)}",
                                    epoch=epoch, sample_index=int(idx))
            leaf_grads = backward(tape, loss)
            grads = {k: leaf_grads[t.node_id] for k, t in bound.items() if t.node_id in leaf_grads}
            grads, _ = clip_global_norm(grads, CLIP_NORM)
            opt.step(grads)
            total_loss += value
        history.append(total_loss / n_items)
    return history


def _split(bound: dict):
    enc = {k[4:]: v for k, v in bound.items() if k.startswith("enc.")}
    dec = {k[4:]: v for k, v in bound.items() if k.startswith("dec.")}
    return enc, dec


def train_encdec_baseline(enc: Encoder, dec: Decoder, pairs, epochs: int = 10,
                          lr: float = 1e-3, seed: int = 0) -> list[float]:
    """Train encoder and decoder end to end on (source, target) id pairs.

    Teacher forcing, batch size 1, mean NLL over target tokens.  Returns the
    mean loss of each epoch.
    """
    pairs = [(list(s), list(t)) for s, t in pairs]
    flat = {f"enc.{k}": v for k, v in enc.params.items()}
    flat.update({f"dec.{k}": v for k, v in dec.params.items()})

    def loss_fn(bound, idx, rng):
        pe, pd = _split(bound)
        src, tgt = pairs[idx]
        enc_out = encoder_forward(pe, src, enc.dropout, rng, training=True)
        return nll_loss(decoder_forward(pd, enc_out, tgt, dec.dropout, rng, training=True), tgt)

    return _fit(flat, loss_fn, len(pairs), epochs, lr, seed)


def train_autoencoder(enc: Encoder, dec: Decoder, corpus, epochs: int = 10,
                      lr: float = 1e-3, seed: int = 0) -> list[float]:
    """Self-supervised training: every sentence is its own target."""
    return train_encdec_baseline(enc, dec, [(s, s) for s in corpus], epochs, lr, seed)


def train_decoder(dec: Decoder, enc_outputs, targets, epochs: int = 10,
                  lr: float = 1e-3, seed: int = 0) -> list[float]:
    """Train only ``dec`` against fixed (constant) encoder outputs."""
    targets = [list(t) for t in targets]
    if len(enc_outputs) != len(targets):
        raise ContractError("one encoder output per target is required")

    def loss_fn(bound, idx, rng):
        lp = decoder_forward(bound, enc_outputs[idx], targets[idx], dec.dropout, rng, training=True)
        return nll_loss(lp, targets[idx])

    return _fit(dec.params, loss_fn, len(targets), epochs, lr, seed)
