"""Rose tree mixtures of Gaussian process experts.

Each cluster of input/output pairs is scored as

    f(D) = f(inputs) * f(outputs | inputs)

with a Gaussian over the inputs (normal-inverse-Wishart prior integrated
out) and a zero-mean GP with squared exponential kernel over the outputs.
The GP has no finite sufficient statistics, so cluster statistics carry the
member indices alongside the additive input moments.

After building a tree, a new input is routed down it to give posterior
cluster weights, and the predictive density of its output is the weighted
mixture of the clusters' GP predictive normals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp, multigammaln

from .core import log_mixing
from .hyperopt import gradient_ascent, optimize_params
from .likelihood import ClusterModel

LOG_2PI = math.log(2.0 * math.pi)
MAX_POINTS = 300


class IllConditionedKernel(np.linalg.LinAlgError):
    """Gram matrix not positive definite even after jitter."""


@dataclass(frozen=True)
class KernelParams:
    length_scale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 0.01

    def __post_init__(self):
        if min(self.length_scale, self.signal_variance, self.noise_variance) <= 0:
            raise ValueError("kernel parameters must be strictly positive")

    def as_array(self):
        return np.array([self.length_scale, self.signal_variance, self.noise_variance])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass(frozen=True, eq=False)
class InputPriorParams:
    """Normal-inverse-Wishart prior over a cluster's input Gaussian."""

    mean_location: np.ndarray
    scale_count: float
    dof: float
    scale_matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean_location, dtype=float))
        s = np.atleast_2d(np.asarray(self.scale_matrix, dtype=float))
        p = m.shape[0]
        if s.shape != (p, p):
            raise ValueError("scale_matrix must be p x p")
        if self.scale_count <= 0:
            raise ValueError("scale_count must be positive")
        if self.dof <= p - 1:
            raise ValueError("dof must exceed p - 1")
        if not np.allclose(s, s.T):
            raise ValueError("scale_matrix must be symmetric")
        try:
            np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise ValueError("scale_matrix must be positive definite") from None
        object.__setattr__(self, "mean_location", m)
        object.__setattr__(self, "scale_matrix", s)

    @property
    def dims(self):
        return self.mean_location.shape[0]

    @classmethod
    def from_data(cls, inputs, scale_count=0.1, spread=0.25):
        """Weak prior centred on the data: expected cluster covariance is
        ``spread`` times the per-dimension data variance."""
        x = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
        p = x.shape[1]
        var = x.var(axis=0) if len(x) > 1 else np.ones(p)
        var = np.where(var > 0, var, 1.0)
        dof = p + 2.0
        return cls(x.mean(axis=0), scale_count, dof, np.diag(spread * var * (dof - p - 1)))


def se_kernel(x, x_prime, params):
    """Squared exponential covariance between two inputs (no noise term)."""
    d = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(x_prime, dtype=float))
    return float(params.signal_variance * math.exp(-float(d @ d) / (2.0 * params.length_scale ** 2)))


def _sqdist(a, b):
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def cross_kernel(a, b, params):
    """Kernel matrix between input sets ``a`` (m x p) and ``b`` (k x p)."""
    return params.signal_variance * np.exp(-_sqdist(a, b) / (2.0 * params.length_scale ** 2))


def gram(inputs, params, noise=True):
    """Kernel matrix of ``inputs`` with noise variance on the diagonal."""
    k = cross_kernel(inputs, inputs, params)
    if noise:
        k[np.diag_indices_from(k)] += params.noise_variance
    return k


def _factor(k, params):
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        pass
    k = k.copy()
    k[np.diag_indices_from(k)] += 1e-8 * params.signal_variance
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        raise IllConditionedKernel("gram matrix is not positive definite") from None


def _as_inputs(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def gp_log_marginal(inputs, outputs, params):
    """Log density of ``outputs`` under the zero-mean GP at ``inputs``."""
    x = _as_inputs(inputs)
    y = np.asarray(outputs, dtype=float)
    n = y.shape[0]
    if n == 0:
        return 0.0
    chol = _factor(gram(x, params), params)
    z = solve_triangular(chol, y, lower=True)
    return float(-0.5 * z @ z - np.log(np.diag(chol)).sum() - 0.5 * n * LOG_2PI)


def gp_log_marginal_grad(inputs, outputs, params):
    """``(value, gradient)`` of :func:`gp_log_marginal`.

    The gradient is with respect to (length scale, signal variance, noise
    variance) and uses ``0.5 * tr((a a^T - K^-1) dK)`` with ``a = K^-1 y``.
    """
    x = _as_inputs(inputs)
    y = np.asarray(outputs, dtype=float)
    n = y.shape[0]
    if n == 0:
        return 0.0, np.zeros(3)
    sq = _sqdist(x, x)
    ell, sf2 = params.length_scale, params.signal_variance
    k_se = sf2 * np.exp(-sq / (2.0 * ell ** 2))
    k = k_se.copy()
    k[np.diag_indices_from(k)] += params.noise_variance
    chol = _factor(k, params)
    a = cho_solve((chol, True), y)
    value = float(-0.5 * y @ a - np.log(np.diag(chol)).sum() - 0.5 * n * LOG_2PI)
    w = np.outer(a, a) - cho_solve((chol, True), np.eye(n))
    grad = np.array([
        0.5 * np.sum(w * (k_se * sq / ell ** 3)),
        0.5 * np.sum(w * (k_se / sf2)),
        0.5 * np.trace(w),
    ])
    return value, grad


def _input_log_marginal_from_moments(n, sx, sxx, prior):
    if n == 0:
        return 0.0
    p = prior.dims
    k0, nu0, m0, psi0 = prior.scale_count, prior.dof, prior.mean_location, prior.scale_matrix
    kn, nun = k0 + n, nu0 + n
    mn = (k0 * m0 + sx) / kn
    psin = psi0 + sxx + k0 * np.outer(m0, m0) - kn * np.outer(mn, mn)
    sign0, logdet0 = np.linalg.slogdet(psi0)
    signn, logdetn = np.linalg.slogdet(psin)
    if signn <= 0:
        raise FloatingPointError("posterior scale matrix lost positive definiteness")
    return float(-0.5 * n * p * math.log(math.pi)
                 + multigammaln(0.5 * nun, p) - multigammaln(0.5 * nu0, p)
                 + 0.5 * nu0 * logdet0 - 0.5 * nun * logdetn
                 + 0.5 * p * (math.log(k0) - math.log(kn)))


def input_log_marginal(inputs, prior):
    """Log marginal density of ``inputs`` under a Gaussian with NIW prior."""
    x = np.asarray(inputs, dtype=float).reshape(-1, prior.dims)
    return _input_log_marginal_from_moments(x.shape[0], x.sum(axis=0), x.T @ x, prior)


def gp_cluster_log_f(inputs, outputs, params, prior):
    """Joint cluster score: input marginal plus GP marginal of the outputs."""
    x = _as_inputs(inputs)
    if x.shape[0] == 0:
        return 0.0
    return input_log_marginal(x, prior) + gp_log_marginal(x, outputs, params)


@dataclass(frozen=True, eq=False)
class GpStats:
    """Member indices plus input moments (count, sum, sum of outer products)."""

    indices: tuple
    n_points: int
    sum_x: np.ndarray
    sum_xx: np.ndarray


class GPExperts(ClusterModel):
    """Mixture-of-GP-experts cluster model over ``(inputs, outputs)`` pairs.

    Outputs are centred by their training mean; ``offset`` restores it in
    predictions. ``params`` is the kernel ``(length_scale, signal_variance,
    noise_variance)``; the input prior stays fixed during optimisation.
    """

    def __init__(self, inputs, outputs, kernel=None, prior=None, max_points=MAX_POINTS,
                 offset=None):
        x = _as_inputs(inputs)
        y = np.asarray(outputs, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("inputs and outputs must have the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("inputs and outputs must be finite")
        if max_points is not None and y.shape[0] > max_points:
            raise ValueError(f"{y.shape[0]} points exceeds the GP size guard of {max_points}")
        self.inputs = x
        self.outputs = y
        self.offset = float(y.mean()) if offset is None and y.size else float(offset or 0.0)
        self.centred = y - self.offset
        self.n_points, self.input_dims = x.shape
        self.kernel = kernel if kernel is not None else KernelParams()
        self.prior = prior if prior is not None else InputPriorParams.from_data(x)
        self.max_points = max_points

    def leaf_stats(self, index):
        x = self.inputs[index]
        return GpStats((int(index),), 1, x.copy(), np.outer(x, x))

    def merge_stats(self, a, b):
        return GpStats(a.indices + b.indices, a.n_points + b.n_points,
                       a.sum_x + b.sum_x, a.sum_xx + b.sum_xx)

    def stats_of(self, indices):
        idx = tuple(int(i) for i in indices)
        x = self.inputs[list(idx)]
        return GpStats(idx, len(idx), x.sum(axis=0), x.T @ x)

    def input_log_f(self, stats):
        return _input_log_marginal_from_moments(stats.n_points, stats.sum_x, stats.sum_xx,
                                                self.prior)

    def output_log_f(self, stats):
        idx = list(stats.indices)
        return gp_log_marginal(self.inputs[idx], self.centred[idx], self.kernel)

    def log_f(self, stats):
        if stats.n_points == 0:
            return 0.0
        return self.input_log_f(stats) + self.output_log_f(stats)

    def log_f_grad(self, stats):
        idx = list(stats.indices)
        return gp_log_marginal_grad(self.inputs[idx], self.centred[idx], self.kernel)[1]

    @property
    def params(self):
        return self.kernel.as_array()

    def with_params(self, params):
        return GPExperts(self.inputs, self.outputs, KernelParams.from_array(params),
                         self.prior, self.max_points, self.offset)


def optimize_kernel(model, tree=None, gamma=0.5, steps=200, rate=0.1, rel_tol=1e-8):
    """Fit kernel parameters by backtracking gradient ascent.

    With a tree, the objective is the tree's log marginal likelihood;
    without, it is the single-GP marginal of all outputs. Returns
    ``(model, trace)``.
    """
    if tree is not None:
        return optimize_params(tree, model, gamma, steps, rate, rel_tol)

    def objective(params):
        return gp_log_marginal_grad(model.inputs, model.centred, KernelParams.from_array(params))

    params, trace = gradient_ascent(objective, model.params, steps, rate, rel_tol)
    return model.with_params(params), trace


class GpPredictor:
    """Predictive quantities of a built GP-experts tree at new inputs."""

    def __init__(self, tree, model, gamma):
        self.tree = tree
        self.model = model
        self.gamma = float(gamma)
        self._factors = {}
        self.nodes = tree.postorder()

    def _factor(self, t):
        if t.node_id not in self._factors:
            idx = list(t.stats.indices)
            x = self.model.inputs[idx]
            chol = _factor(gram(x, self.model.kernel), self.model.kernel)
            alpha = cho_solve((chol, True), self.model.centred[idx])
            self._factors[t.node_id] = (x, chol, alpha)
        return self._factors[t.node_id]

    def weights(self, x_new):
        """Posterior probability of ``x_new`` joining each node's cluster.

        Down the tree, a node keeps ``x_new`` with the responsibility of its
        keep-together event when ``x_new``'s input is added to the node's
        input marginal; otherwise ``x_new`` is routed to a child with prior
        weight proportional to the child's size times the child's evidence
        ratio. The weights telescope to one.
        """
        x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
        xx = np.outer(x_new, x_new)
        log_q = {}
        keep = {}
        route = {}
        model = self.model
        for t in self.nodes:
            s = t.stats
            gain = (_input_log_marginal_from_moments(s.n_points + 1, s.sum_x + x_new,
                                                     s.sum_xx + xx, model.prior)
                    - _input_log_marginal_from_moments(s.n_points, s.sum_x, s.sum_xx,
                                                       model.prior))
            if t.is_leaf:
                log_q[t.node_id] = t.log_f + gain
                keep[t.node_id] = 1.0
                continue
            log_keep, log_split = log_mixing(t.n_children, self.gamma)
            kids = t.children
            ev = np.array([math.log(c.n_leaves / t.n_leaves) + log_q[c.node_id] - c.log_p
                           for c in kids])
            log_route = logsumexp(ev)
            whole = log_keep + t.log_f + gain
            split = log_split + sum(c.log_p for c in kids) + log_route
            log_q[t.node_id] = float(np.logaddexp(whole, split))
            keep[t.node_id] = math.exp(whole - log_q[t.node_id])
            route[t.node_id] = np.exp(ev - log_route)
        out = {}
        stack = [(self.tree, 1.0)]
        while stack:
            t, mass = stack.pop()
            out[t.node_id] = mass * keep[t.node_id]
            if not t.is_leaf:
                rest = mass * (1.0 - keep[t.node_id])
                stack.extend((c, rest * w) for c, w in zip(t.children, route[t.node_id]))
        return out

    def node_predictive(self, t, x_new):
        """GP predictive mean and variance of ``y`` at ``x_new`` within node ``t``."""
        x, chol, alpha = self._factor(t)
        xs = np.atleast_2d(np.asarray(x_new, dtype=float))
        ks = cross_kernel(x, xs, self.model.kernel)[:, 0]
        v = solve_triangular(chol, ks, lower=True)
        kern = self.model.kernel
        var = kern.signal_variance - v @ v + kern.noise_variance
        return float(ks @ alpha + self.model.offset), float(max(var, kern.noise_variance))

    def density(self, x_new, y_grid, min_weight=0.0):
        """Mixture predictive density of ``y`` at ``x_new`` over ``y_grid``."""
        y_grid = np.asarray(y_grid, dtype=float)
        out = np.zeros_like(y_grid)
        by_id = {t.node_id: t for t in self.nodes}
        for nid, w in self.weights(x_new).items():
            if w <= min_weight:
                continue
            mu, var = self.node_predictive(by_id[nid], x_new)
            out += w * np.exp(-0.5 * (y_grid - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)
        return out

    def mean_curve(self, t, xs):
        """Posterior mean of node ``t``'s GP along the inputs ``xs``."""
        x, _, alpha = self._factor(t)
        ks = cross_kernel(x, _as_inputs(xs), self.model.kernel)
        return ks.T @ alpha + self.model.offset


def cluster_posterior_weights(tree, model, gamma, x_new):
    return GpPredictor(tree, model, gamma).weights(x_new)


def predictive_density(tree, model, gamma, x_new, y_grid):
    return GpPredictor(tree, model, gamma).density(x_new, y_grid)


def interlaced_curves(n=200, noise=0.05, seed=0):
    """Two noisy curves that cross each other over a shared input range.

    The first curve covers ``x`` in [0, 6] and the second [3, 9]; on [3, 6]
    they interleave, giving a bimodal conditional density there. Returns
    ``(inputs, outputs, labels)``.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = np.where(labels == 0, rng.uniform(0.0, 6.0, n), rng.uniform(3.0, 9.0, n))
    y = np.where(labels == 0, np.sin(x) + 0.3 * (x - 4.5), -np.sin(x) - 0.3 * (x - 4.5))
    y = y + noise * rng.standard_normal(n)
    return x[:, None], y, labels
