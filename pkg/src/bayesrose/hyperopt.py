"""Hyperparameter fitting on a fixed tree, and alternation with tree search.

The likelihood parameters are fitted by backtracking gradient ascent on
``log p(D | T)`` in log-parameterisation, with the gradient obtained by one
bottom-up pass that weights each node's ``d log f`` by its responsibility.
``gamma`` is a scalar in (0, 1) and is fitted with Brent's method.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .builder import build
from .core import log_mixing, score_tree

GAMMA_EPS = 1e-6


def responsibilities(tree, gamma):
    """Posterior probability that each node keeps its leaves in one cluster.

    Read from the tree's cached marginals, which must have been computed
    with the same ``gamma``. Leaves get 1.
    """
    out = {}
    for t in tree.postorder():
        if t.is_leaf:
            out[t.node_id] = 1.0
        else:
            log_keep = log_mixing(t.n_children, gamma)[0]
            out[t.node_id] = math.exp(min(0.0, log_keep + t.log_f - t.log_p))
    return out


def grad_log_marginal(tree, model, gamma):
    """``(log p(D | T), d/d params)`` for the likelihood parameters of ``model``."""
    scored = score_tree(tree, model, gamma)
    grads = {}
    for t in scored.postorder():
        g_f = np.asarray(model.log_f_grad(t.stats), dtype=float)
        if t.is_leaf:
            grads[id(t)] = g_f
            continue
        log_keep = log_mixing(t.n_children, gamma)[0]
        r = math.exp(min(0.0, log_keep + t.log_f - t.log_p))
        g_children = sum(grads.pop(id(c)) for c in t.children)
        grads[id(t)] = r * g_f + (1.0 - r) * g_children
    return scored.log_p, grads[id(scored)]


class GammaProfile:
    """``log p(D | T)`` as a function of ``gamma`` for a fixed tree and model.

    Cluster marginals do not depend on ``gamma`` and are computed once, so
    the profile evaluates whole arrays of ``gamma`` values in one pass.
    """

    def __init__(self, tree, model):
        nodes = score_tree(tree, model, 0.5).postorder()
        pos = {id(t): i for i, t in enumerate(nodes)}
        self.log_f = np.array([t.log_f for t in nodes])
        self.children = [[pos[id(c)] for c in t.children] for t in nodes]
        self.n_internal = sum(1 for t in nodes if not t.is_leaf)

    def __call__(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        log1m = np.log1p(-gamma)
        log_g = np.log(gamma)
        vals = {}
        for pos, (lf, kids) in enumerate(zip(self.log_f, self.children)):
            if not kids:
                vals[pos] = np.broadcast_to(lf, gamma.shape)
                continue
            k = len(kids)
            log_split = (k - 1) * log1m
            log_keep = log_g if k == 2 else np.log(-np.expm1(log_split))
            below = sum(vals.pop(i) for i in kids)
            vals[pos] = np.logaddexp(log_keep + lf, log_split + below)
        return vals[len(self.log_f) - 1]


def optimize_gamma(tree, model, tol=1e-7, eps=GAMMA_EPS, coarse=101):
    """Maximise ``log p(D | T)`` over ``gamma`` in ``[eps, 1 - eps]``.

    A coarse scan picks the bracket around the best grid point and Brent's
    bounded method refines it, which guards against a secondary local mode.
    """
    profile = GammaProfile(tree, model)
    if profile.n_internal == 0:
        return 0.5
    lo, hi = eps, 1.0 - eps
    grid = np.linspace(lo, hi, coarse)
    i = int(np.argmax(profile(grid)))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, coarse - 1)]
    res = minimize_scalar(lambda g: -float(profile(g)), bounds=(a, b), method="bounded",
                          options={"xatol": tol})
    best = float(res.x)
    # the bounded method never evaluates the end points themselves
    for edge in (a, b):
        if profile(edge) > profile(best):
            best = float(edge)
    return best


def gradient_ascent(objective, x0, steps=200, rate=0.1, rel_tol=1e-8, max_halvings=40):
    """Backtracking ascent on ``objective(x) -> (value, grad)`` in log space.

    ``x0`` is a positive vector; the search variable is ``log(x)``. A step is
    accepted only if it does not decrease the objective, so the returned
    trace is non-decreasing. Returns ``(x, trace)``.
    """
    theta = np.log(np.asarray(x0, dtype=float))
    value, grad = objective(np.exp(theta))
    trace = [value]
    eta = rate
    for _ in range(steps):
        g = grad * np.exp(theta)
        if not np.any(g):
            break
        accepted = False
        for _ in range(max_halvings):
            cand = theta + eta * g
            try:
                v, gr = objective(np.exp(cand))
            except (FloatingPointError, np.linalg.LinAlgError):
                v = -math.inf
            if np.isfinite(v) and v >= value:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        improvement = v - value
        theta, value, grad = cand, v, gr
        trace.append(value)
        eta *= 2.0
        if improvement <= rel_tol * max(1.0, abs(value)):
            break
    return np.exp(theta), trace


def optimize_params(tree, model, gamma, steps=200, rate=0.1, rel_tol=1e-8):
    """Fit the likelihood parameters of ``model`` on a fixed tree.

    Returns ``(new_model, trace)`` where ``trace`` holds the objective after
    every accepted step.
    """
    def objective(params):
        return grad_log_marginal(tree, model.with_params(params), gamma)

    params, trace = gradient_ascent(objective, model.params, steps, rate, rel_tol)
    return model.with_params(params), trace


optimize_beta = optimize_params


@dataclass
class AlternationResult:
    tree: object
    model: object
    gamma: float
    log_p: float
    history: list = field(default_factory=list)


def em_alternation(model, gamma, max_rounds=10, mode="rose", steps=200, tol=1e-9):
    """Alternate greedy tree search with hyperparameter fitting.

    Each round builds a tree with the current hyperparameters, then fits
    ``gamma`` and the likelihood parameters on that tree. Stops after a round
    that fails to improve on the best score by more than ``tol`` or after
    ``max_rounds``; the best (tree, hyperparameters) seen is returned.
    ``history`` has one record per round.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    best = None
    history = []
    for rnd in range(1, max_rounds + 1):
        tree = build(model, gamma, mode)
        built_score = tree.log_p
        gamma = optimize_gamma(tree, model)
        model, _ = optimize_params(tree, model, gamma, steps=steps)
        tree = score_tree(tree, model, gamma)
        improved = best is None or tree.log_p > best.log_p + tol
        if improved:
            best = AlternationResult(tree, model, gamma, tree.log_p)
        history.append({"round": rnd, "built_log_p": built_score, "log_p": tree.log_p,
                        "gamma": gamma, "best_log_p": best.log_p})
        if not improved:
            break
    best.history = history
    return best
