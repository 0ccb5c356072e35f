"""Diagonal-covariance Gaussian mixtures over latent vectors, fitted by EM.

All density arithmetic is done in log space; at latent dimension 200 the raw
Gaussian normaliser underflows.

    log g(x | mu, sigma^2) = -L/2 log(2 pi) - 1/2 sum_j log sigma_j^2
                             - 1/2 sum_j (x_j - mu_j)^2 / sigma_j^2
    log p(x) = logsumexp_i (log w_i + log g(x | mu_i, sigma_i^2))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import ConfigurationError, ContractError, ShapeError

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
EMPTY_MASS = 1e-10
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianComponent:
    mu: np.ndarray
    sigma_diag: np.ndarray
    weight: float


@dataclass
class GmmModel:
    """M weighted diagonal Gaussians; row i of each array belongs to component i."""

    means: np.ndarray      # M x L
    variances: np.ndarray  # M x L
    weights: np.ndarray    # M
    history: list = field(default_factory=list)  # mean log-likelihood per EM iteration

    @property
    def M(self) -> int:
        return self.means.shape[0]

    @property
    def L(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(self.means[i], self.variances[i], float(self.weights[i]))
                for i in range(self.M)]

    def to_state(self) -> dict:
        return {"means": self.means, "variances": self.variances, "weights": self.weights,
                "history": list(self.history)}

    @classmethod
    def from_state(cls, state: dict) -> "GmmModel":
        return cls(np.asarray(state["means"]), np.asarray(state["variances"]),
                   np.asarray(state["weights"]), list(state.get("history", [])))


def component_log_density(c: GaussianComponent, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != c.mu.shape:
        raise ShapeError(f"point of shape {x.shape} vs component of dimension {c.mu.shape}")
    if np.any(c.sigma_diag < VAR_FLOOR):
        raise ContractError(f"variance below the floor {VAR_FLOOR}")
    d = x - c.mu
    return float(-0.5 * (x.size * _LOG_2PI + np.sum(np.log(c.sigma_diag)) + np.sum(d * d / c.sigma_diag)))


def _component_log_densities(X, means, variances):
    """N x M matrix of log g(x_n | component m)."""
    log_det = np.sum(np.log(variances), axis=1)
    maha = np.empty((X.shape[0], means.shape[0]))
    for k in range(means.shape[0]):
        d = X - means[k]
        maha[:, k] = (d * d) @ (1.0 / variances[k])
    return -0.5 * (X.shape[1] * _LOG_2PI + log_det + maha)


def _log_joint(m: GmmModel, X):
    return np.log(m.weights) + _component_log_densities(X, m.means, m.variances)


def _as_points(m: GmmModel, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.L:
        raise ShapeError(f"points of dimension {X.shape[1]} for a model of dimension {m.L}")
    return X, single


def mixture_log_density(m: GmmModel, x):
    """log p(x); accepts one point or an N x L matrix."""
    X, single = _as_points(m, x)
    out = logsumexp(_log_joint(m, X), axis=1)
    return float(out[0]) if single else out


def posterior(m: GmmModel, x) -> np.ndarray:
    """Pr(component | x); a vector for one point, N x M for a matrix."""
    X, single = _as_points(m, x)
    lj = _log_joint(m, X)
    post = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return post[0] if single else post


def assign(m: GmmModel, x):
    """Most probable component (lowest index on ties)."""
    X, single = _as_points(m, x)
    labels = np.argmax(_log_joint(m, X), axis=1)
    return int(labels[0]) if single else labels


def _kmeanspp(X, M, rng):
    N = X.shape[0]
    centers = [int(rng.integers(N))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, M):
        total = d2.sum()
        nxt = int(rng.integers(N)) if total <= 0 else int(rng.choice(N, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[centers].copy()


def fit_em(data, M: int, seed: int = 0, max_iter: int = 200, tol: float = 1e-6) -> GmmModel:
    """Fit M diagonal Gaussians by expectation-maximization.

    Means are seeded k-means++ style, weights start uniform and variances at
    the global per-dimension variance.  Iteration stops once the mean
    log-likelihood improves by less than ``tol`` or after ``max_iter``
    E-steps.  A component whose responsibility mass drops below 1e-10 is
    re-seeded at the point the current mixture explains worst.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeError(f"data must be an N x L matrix, got shape {X.shape}")
    N, L = X.shape
    if M < 1 or N < M:
        raise ConfigurationError(f"cannot fit {M} components to {N} points")
    rng = np.random.default_rng(seed)
    global_var = np.maximum(X.var(axis=0), VAR_FLOOR)
    model = GmmModel(_kmeanspp(X, M, rng), np.tile(global_var, (M, 1)), np.full(M, 1.0 / M))

    history = []
    for it in range(max_iter):
        lj = _log_joint(model, X)
        lse = logsumexp(lj, axis=1, keepdims=True)
        history.append(float(np.mean(lse)))
        if it > 0 and history[-1] - history[-2] < tol:
            break
        resp = np.exp(lj - lse)
        mass = resp.sum(axis=0)
        means = np.empty((M, L))
        variances = np.empty((M, L))
        for k in range(M):
            if mass[k] < EMPTY_MASS:
                worst = int(np.argmin(lse[:, 0]))
                log.warning("EM: component %d is empty; re-seeding at point %d", k, worst)
                means[k] = X[worst]
                variances[k] = global_var
                mass[k] = 1.0
                continue
            r = resp[:, k]
            means[k] = r @ X / mass[k]
            d = X - means[k]
            variances[k] = np.maximum(r @ (d * d) / mass[k], VAR_FLOOR)
        model = GmmModel(means, variances, mass / mass.sum())
    model.history = history
    return model


def silhouette_samples(data, labels, chunk: int = 1024) -> np.ndarray:
    """Per-point silhouette (b - a) / max(a, b) with Euclidean distances; singletons score 0."""
    X = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, codes = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ContractError("silhouette needs at least two distinct clusters")
    N, K = X.shape[0], len(uniq)
    sizes = np.bincount(codes, minlength=K).astype(np.float64)
    onehot = np.zeros((N, K))
    onehot[np.arange(N), codes] = 1.0
    out = np.zeros(N)
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        sums = cdist(X[start:stop], X) @ onehot          # distance totals per cluster
        own = codes[start:stop]
        rows = np.arange(stop - start)
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        out[start:stop] = np.where(own_size > 1, s, 0.0)
    return out


def silhouette(data, labels) -> float:
    """Mean silhouette coefficient over all points, in [-1, 1]."""
    return float(np.mean(silhouette_samples(data, labels)))
