"""Cluster marginal likelihoods and the interface the tree code scores with.

A cluster model maps data indices to additive statistics and evaluates
``log f`` for a set of points with the component parameters integrated out.
The beta-Bernoulli model for binary vectors lives here; the Gaussian process
experts model in :mod:`bayesrose.gp_experts` implements the same interface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, gammaln

from . import kernels


@dataclass(frozen=True)
class Hyperparams:
    """Mixing hyperparameter ``gamma`` plus per-dimension beta prior."""

    gamma: float
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if alpha.shape != beta.shape:
            raise ValueError("alpha and beta must have the same length")
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise ValueError("alpha and beta must be strictly positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def default(cls, dims, gamma=0.5):
        """Uniform beta(1, 1) prior in every dimension."""
        return cls(gamma, np.ones(dims), np.ones(dims))

    @property
    def dims(self):
        return self.alpha.shape[0]


class ClusterModel:
    """Base class for cluster marginal likelihoods.

    Subclasses hold the data and their own likelihood parameters. ``params``
    is a strictly positive vector so that optimisers can work on its log.
    """

    n_points: int

    def leaf_stats(self, index):
        raise NotImplementedError

    def merge_stats(self, a, b):
        raise NotImplementedError

    def stats_of(self, indices):
        """Statistics of an arbitrary non-empty set of data indices."""
        indices = list(indices)
        stats = self.leaf_stats(indices[0])
        for i in indices[1:]:
            stats = self.merge_stats(stats, self.leaf_stats(i))
        return stats

    def log_f(self, stats):
        raise NotImplementedError

    def log_f_grad(self, stats):
        """Gradient of ``log_f(stats)`` with respect to ``params``."""
        raise NotImplementedError

    @property
    def params(self):
        raise NotImplementedError

    def with_params(self, params):
        raise NotImplementedError

    def pool(self, capacity):
        """Slot storage used by the greedy builder for batched scoring."""
        return StatsPool(self, capacity)


class StatsPool:
    """Generic slot storage: merged scores are computed one pair at a time."""

    def __init__(self, model, capacity):
        self.model = model
        self.stats = [None] * capacity

    def put(self, slot, stats):
        self.stats[slot] = stats

    def merged_log_f(self, slot, partners):
        s = self.stats[slot]
        merge, log_f = self.model.merge_stats, self.model.log_f
        return np.array([log_f(merge(s, self.stats[j])) for j in partners], dtype=float)


@dataclass(frozen=True, eq=False)
class ClusterStats:
    """Point count and per-dimension count of ones for a binary cluster."""

    n_points: int
    ones: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ClusterStats):
            return NotImplemented
        return self.n_points == other.n_points and np.array_equal(self.ones, other.ones)

    def __hash__(self):
        return hash((self.n_points, self.ones.tobytes()))

    @classmethod
    def empty(cls, dims):
        return cls(0, np.zeros(dims, dtype=np.int64))


def stats_from_point(x):
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("expected a single data vector")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("beta-Bernoulli data must be binary (0/1)")
    return ClusterStats(1, x.astype(np.int64))


def merge_stats(a, b):
    if a.ones.shape != b.ones.shape:
        raise ValueError(
            f"dimension mismatch: {a.ones.shape[0]} vs {b.ones.shape[0]}")
    return ClusterStats(a.n_points + b.n_points, a.ones + b.ones)


def _check_prior(alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ValueError("beta prior parameters must be strictly positive")
    return alpha, beta


def bb_log_f(stats, alpha, beta):
    """Log marginal likelihood of a binary cluster, integrating out each
    dimension's Bernoulli parameter under its beta prior."""
    alpha, beta = _check_prior(alpha, beta)
    n, N = stats.ones, stats.n_points
    return float(np.sum(betaln(alpha + n, beta + N - n) - betaln(alpha, beta)))


def bb_log_f_grad(stats, alpha, beta):
    """Gradient of :func:`bb_log_f`, returned as ``concat(d/dalpha, d/dbeta)``."""
    alpha, beta = _check_prior(alpha, beta)
    n, N = stats.ones, stats.n_points
    common = digamma(alpha + beta) - digamma(alpha + beta + N)
    g_alpha = digamma(alpha + n) - digamma(alpha) + common
    g_beta = digamma(beta + N - n) - digamma(beta) + common
    return np.concatenate([g_alpha, g_beta])


class BetaBernoulli(ClusterModel):
    """Factorised beta-Bernoulli model over rows of a binary matrix."""

    def __init__(self, data, alpha=None, beta=None):
        data = np.asarray(data)
        if data.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if not np.all((data == 0) | (data == 1)):
            raise ValueError("beta-Bernoulli data must be binary (0/1)")
        self.data = data.astype(np.int64)
        self.n_points, self.dims = self.data.shape
        alpha = np.ones(self.dims) if alpha is None else alpha
        beta = np.ones(self.dims) if beta is None else beta
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.dims,)).copy()
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (self.dims,)).copy()
        self.alpha, self.beta = _check_prior(alpha, beta)

    @classmethod
    def from_hyperparams(cls, data, hyper):
        return cls(data, hyper.alpha, hyper.beta)

    def leaf_stats(self, index):
        return ClusterStats(1, self.data[index])

    def merge_stats(self, a, b):
        return merge_stats(a, b)

    def stats_of(self, indices):
        indices = list(indices)
        return ClusterStats(len(indices), self.data[indices].sum(axis=0))

    def log_f(self, stats):
        return bb_log_f(stats, self.alpha, self.beta)

    def log_f_grad(self, stats):
        return bb_log_f_grad(stats, self.alpha, self.beta)

    @property
    def params(self):
        return np.concatenate([self.alpha, self.beta])

    def with_params(self, params):
        params = np.asarray(params, dtype=float)
        return BetaBernoulli(self.data, params[: self.dims], params[self.dims:])

    def pool(self, capacity):
        return BetaBernoulliPool(self, capacity)


class BetaBernoulliPool(StatsPool):
    """Counts-matrix storage with log-gamma lookup tables.

    Counts are integers bounded by the dataset size, so every log-gamma value
    the builder needs is tabulated once and scoring reduces to lookups.
    """

    def __init__(self, model, capacity):
        self.model = model
        self.counts = np.zeros((capacity, model.dims), dtype=np.int64)
        self.sizes = np.zeros(capacity, dtype=np.int64)
        k = np.arange(model.n_points + 1, dtype=float)[:, None]
        a, b = model.alpha[None, :], model.beta[None, :]
        self.lg_alpha = np.ascontiguousarray(gammaln(a + k))
        self.lg_beta = np.ascontiguousarray(gammaln(b + k))
        self.lg_total = np.ascontiguousarray(gammaln(a + b + k).sum(axis=1))
        self.offset = float(np.sum(gammaln(a + b) - gammaln(a) - gammaln(b)))

    def put(self, slot, stats):
        self.counts[slot] = stats.ones
        self.sizes[slot] = stats.n_points

    def merged_log_f(self, slot, partners):
        partners = np.ascontiguousarray(partners, dtype=np.int64)
        return kernels.bb_merged_log_f(
            self.counts, self.sizes, slot, partners,
            self.lg_alpha, self.lg_beta, self.lg_total, self.offset)
