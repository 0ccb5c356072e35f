"""One decoder ("filter") per mixture component, trained on that component's samples.

At inference a sentence is routed either to the filter of its most probable
component (hard) or decoded by all filters at once with their next-token
distributions mixed by the component posteriors (soft).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .gmm import GmmModel, assign, posterior
from .seq2seq import (Decoder, Encoder, bind, choose_token, decode_step, encode,
                      greedy_decode, initial_state, train_decoder)
from .data import EOS
from .errors import ConfigurationError, ContractError

log = logging.getLogger(__name__)


def derive_seed(master: int, *keys: int) -> int:
    """Independent child seed for (master, keys...)."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


@dataclass
class FilterBank:
    gmm: GmmModel
    filters: list[Decoder]

    def __post_init__(self):
        if len(self.filters) != self.gmm.M:
            raise ConfigurationError(f"{len(self.filters)} filters for {self.gmm.M} components")

    @property
    def k(self) -> int:
        return len(self.filters)

    @classmethod
    def create(cls, gmm: GmmModel, vocab_size: int, embed_dim: int = 150, hidden_dim: int = 200,
               dropout: float = 0.2, seed: int = 0) -> "FilterBank":
        """Freshly initialised filters, filter j seeded from ``derive_seed(seed, 0, j)``."""
        filters = [Decoder(vocab_size, embed_dim, hidden_dim, dropout, seed=derive_seed(seed, 0, j))
                   for j in range(gmm.M)]
        return cls(gmm, filters)


def partition(gmm: GmmModel, representations) -> list[list[int]]:
    reps = np.asarray(representations, dtype=np.float64)
    parts: list[list[int]] = [[] for _ in range(gmm.M)]
    if len(reps) == 0:
        return parts
    for i, j in enumerate(assign(gmm, reps)):
        parts[int(j)].append(i)
    for j, idx in enumerate(parts):
        if not idx:
            log.warning("partition: cluster %d received no samples", j)
    return parts


def train_filters(bank: FilterBank, enc: Encoder, pairs, parts, epochs: int = 10,
                  lr: float = 1e-3, seed: int = 0) -> list[list[float]]:
    """Train filter j on ``pairs[i]`` for i in ``parts[j]`` only.

    The encoder is evaluated once per sample in evaluation mode and never
    updated.  Filter j shuffles and samples dropout from
    ``derive_seed(seed, 1, j)``.  Empty partitions leave their filter as
    initialised and produce an empty log.
    """
    if len(parts) != bank.k:
        raise ContractError(f"{len(parts)} partitions for {bank.k} filters")
    pairs = [(list(s), list(t)) for s, t in pairs]
    cache = {}
    logs = []
    for j, (dec, idx) in enumerate(zip(bank.filters, parts)):
        if not idx:
            log.warning("filter %d has no training data; left at initialisation", j)
            logs.append([])
            continue
        for i in idx:
            if i not in cache:
                cache[i] = encode(enc, pairs[i][0])
        logs.append(train_decoder(dec, [cache[i] for i in idx], [pairs[i][1] for i in idx],
                                  epochs, lr, derive_seed(seed, 1, j)))
    return logs


def decode_hard(bank: FilterBank, enc: Encoder, tokens, max_len: int) -> list[int]:
    enc_out = encode(enc, tokens)
    j = assign(bank.gmm, enc_out.representation.data)
    return greedy_decode(bank.filters[j], enc_out, max_len)


def decode_soft(bank: FilterBank, enc: Encoder, tokens, max_len: int,
                weights=None, trace: list | None = None) -> list[int]:
    """Greedy decoding from the posterior-weighted mixture of filter distributions.

    Every filter advances its own state on the shared previously emitted
    token.  ``weights`` overrides the posterior; if ``trace`` is a list, the
    mixed log-distribution of every step is appended to it.
    """
    if max_len < 1:
        raise ContractError("max_len must be at least 1")
    enc_out = encode(enc, tokens)
    w = posterior(bank.gmm, enc_out.representation.data) if weights is None else np.asarray(weights, float)
    active = [j for j in range(bank.k) if w[j] > 0]
    bound = {j: bind(bank.filters[j].params) for j in active}
    states = {j: initial_state(enc_out) for j in active}
    out = []
    for _ in range(max_len):
        mixed = 0.0
        for j in active:
            lp, states[j] = decode_step(bound[j], states[j], enc_out)
            mixed = mixed + w[j] * np.exp(lp.data)
        mixed_log = np.log(mixed / np.sum(mixed))
        if trace is not None:
            trace.append(mixed_log)
        tok = choose_token(mixed_log)
        if tok == EOS:
            break
        out.append(tok)
        for j in active:
            states[j].prev_token = tok
    return out
