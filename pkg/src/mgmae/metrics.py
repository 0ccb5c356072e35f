"""Training loss and evaluation metrics.

BLEU follows the usual corpus-level recipe: clipped n-gram precisions for
n = 1..4 pooled over the corpus, uniform weights, and a brevity penalty from
the total reference and candidate lengths.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor, mul, pick, scale, total
from .errors import ContractError

PAD_ID = 0


def nll_loss(log_probs: Tensor, targets, weights=None, pad_id: int | None = PAD_ID) -> Tensor:
    """Weighted mean negative log-likelihood of ``targets`` under row log-distributions.

    Each position contributes ``-w[y] * log_probs[n, y]``; the sum is divided
    by the total weight of the counted targets.  Positions whose target is
    ``pad_id`` are skipped.
    """
    targets = np.asarray(targets, dtype=np.int64)
    N, V = log_probs.shape
    if targets.shape != (N,):
        raise ContractError(f"{targets.shape[0]} targets for {N} rows of log-probabilities")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise ContractError(f"target id outside [0, {V})")
    w = np.ones(V) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (V,) or np.any(w < 0):
        raise ContractError("class weights must be a nonnegative vector of vocabulary length")
    per_pos = w[targets]
    if pad_id is not None:
        per_pos = np.where(targets == pad_id, 0.0, per_pos)
    denom = per_pos.sum()
    if denom <= 0:
        raise ContractError("no weighted target positions to average over")
    picked = pick(log_probs, targets)
    return scale(total(mul(picked, Tensor(per_pos))), -1.0 / denom)


def brevity_penalty(r: int, c: int, mode: str = "standard") -> float:
    """Length penalty ``exp(1 - r/c)``, capped at 1 unless ``mode='paper-exact'``."""
    if c <= 0:
        raise ContractError("brevity penalty needs a positive candidate length")
    if mode == "standard":
        return 1.0 if c > r else math.exp(1.0 - r / c)
    if mode == "paper-exact":
        return math.exp(1.0 - r / c)
    raise ContractError(f"unknown brevity-penalty mode {mode!r}")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    r: int = 0
    c: int = 0
    matches: list = field(default_factory=lambda: [0] * 4)
    totals: list = field(default_factory=lambda: [0] * 4)

    def precisions(self) -> list[float]:
        """Clipped precisions.

        An order with no matches gets add-one smoothing ``1 / (total + 1)`` so
        its logarithm stays finite while the precision stays below 1.
        """
        return [m / t if m > 0 else 1.0 / (t + 1) for m, t in zip(self.matches, self.totals)]


def bleu_stats(candidates: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> BleuStats:
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    stats = BleuStats(matches=[0] * max_n, totals=[0] * max_n)
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        stats.r += len(ref)
        stats.c += len(cand)
        for n in range(1, max_n + 1):
            cc = _ngrams(cand, n)
            rc = _ngrams(ref, n)
            stats.matches[n - 1] += sum(min(k, rc[g]) for g, k in cc.items())
            stats.totals[n - 1] += max(len(cand) - n + 1, 0)
    return stats


def bleu(candidates, references, max_n: int = 4, bp_mode: str = "standard") -> float:
    """Corpus BLEU on a 0-100 scale."""
    if len(candidates) == 0:
        raise ContractError("BLEU of an empty corpus")
    stats = bleu_stats(candidates, references, max_n)
    if stats.c == 0:
        return 0.0
    log_p = sum(math.log(p) for p in stats.precisions()) / max_n
    return 100.0 * brevity_penalty(stats.r, stats.c, bp_mode) * math.exp(log_p)


def token_accuracy(candidates, references) -> float:
    """Mean positionwise agreement, normalised by the longer sequence, times 100."""
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    scores = []
    for cand, ref in zip(candidates, references):
        longest = max(len(cand), len(ref))
        if longest == 0:
            scores.append(1.0)
            continue
        hits = sum(1 for a, b in zip(cand, ref) if a == b)
        scores.append(hits / longest)
    return 100.0 * float(np.mean(scores))


def denotation_match_proxy(candidates, references) -> float:
    """Exact whole-sequence match rate times 100.

    Stands in for execution-based denotation accuracy; report it as a proxy.
    """
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    return 100.0 * sum(list(c) == list(r) for c, r in zip(candidates, references)) / len(candidates)
