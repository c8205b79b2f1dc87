"""Exhaustive search over small rose trees.

Used to measure how far greedy trees fall from the maximum-likelihood tree.
Every rose tree over a set ``S`` with ``|S| > 1`` is a node whose children
are rose trees over the blocks of a partition of ``S`` into at least two
blocks, so enumeration and counting both recurse over set partitions.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .builder import build
from .core import (
    EnumerationLimitError, count_partitions, leaf, log_mixing, node,
    sample_dataset, score_tree, to_nested,
)
from .likelihood import BetaBernoulli, Hyperparams

MAX_LEAVES = 8
LN2 = math.log(2.0)


def restricted_growth_strings(n):
    """Yield restricted growth strings of length ``n`` in lexicographic order.

    ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``; each string labels one set
    partition of ``range(n)``.
    """
    if n == 0:
        yield ()
        return
    a = [0] * n
    top = [0] * n  # top[i] = max(a[:i + 1])
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] > top[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        top[i] = max(top[i - 1], a[i])
        for j in range(i + 1, n):
            a[j] = 0
            top[j] = top[i]


def set_partitions(items, min_blocks=1):
    """Yield the set partitions of ``items`` as lists of lists."""
    items = list(items)
    for rgs in restricted_growth_strings(len(items)):
        k = max(rgs) + 1 if rgs else 0
        if k < min_blocks:
            continue
        blocks = [[] for _ in range(k)]
        for item, b in zip(items, rgs):
            blocks[b].append(item)
        yield blocks


_COUNTS = [0, 1]


def count_rose_trees(n):
    """Number of distinct rose trees over ``n`` labelled leaves.

    Let ``H(m)`` sum ``prod count(|B|)`` over all partitions of ``m`` items,
    the one-block partition included. Splitting off the block holding the
    first item gives ``H(m) = sum_j C(m-1, j-1) count(j) H(m-j)``, and the
    one-block term of ``H(n)`` is ``count(n)`` itself.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    while len(_COUNTS) <= n:
        m = len(_COUNTS)
        _COUNTS.append(sum(math.comb(m - 1, j - 1) * _COUNTS[j] * _all_partitions_weight(m - j)
                           for j in range(1, m)))
    return _COUNTS[n]


def _all_partitions_weight(m):
    if m <= 1:
        return 1
    return 2 * count_rose_trees(m)


def _check_bound(n, limit):
    if n > limit:
        raise EnumerationLimitError(f"exhaustive search over {n} leaves exceeds bound {limit}")


def enumerate_rose_trees(leaf_set, limit=MAX_LEAVES):
    """Yield every rose tree over ``leaf_set`` exactly once (structure only)."""
    leaf_set = sorted(leaf_set)
    _check_bound(len(leaf_set), limit)
    if not leaf_set:
        raise ValueError("leaf set must be non-empty")
    yield from _trees(tuple(leaf_set))


def _trees(items):
    if len(items) == 1:
        yield leaf(items[0])
        return
    for blocks in set_partitions(items, min_blocks=2):
        subtrees = [list(_trees(tuple(b))) for b in blocks]
        for combo in itertools.product(*subtrees):
            yield node(combo, check=False)


def random_rose_tree(leaf_set, rng):
    """A rose tree drawn uniformly from all rose trees over ``leaf_set``.

    The root's partition is drawn block by block, each block holding the
    smallest remaining item, with block sizes weighted by the counting
    recurrence of :func:`count_rose_trees`; subtrees are then drawn
    independently. Every tree has probability ``1 / count_rose_trees(n)``.
    """
    items = sorted(leaf_set)
    if not items:
        raise ValueError("leaf set must be non-empty")
    if len(items) == 1:
        return leaf(items[0])
    blocks = []
    rest = items
    while rest:
        # the root needs >= 2 blocks, so its first block cannot take everything
        top = len(rest) - 1 if not blocks else len(rest)
        j = _draw_block_size(len(rest), top, rng)
        others = rest[1:]
        picked = rng.choice(len(others), size=j - 1, replace=False) if j > 1 else []
        chosen = {others[i] for i in picked}
        blocks.append([rest[0]] + sorted(chosen))
        rest = [x for x in others if x not in chosen]
    return node([random_rose_tree(b, rng) for b in blocks], check=False)


def _draw_block_size(m, top, rng):
    w = [math.comb(m - 1, j - 1) * count_rose_trees(j) * _all_partitions_weight(m - j)
         for j in range(1, top + 1)]
    total = sum(w)
    return int(rng.choice(top, p=[x / total for x in w])) + 1


def _tie_key(tree):
    return (count_partitions(tree), repr(to_nested(tree)))


def optimal_tree(model, gamma, method="dp", limit=MAX_LEAVES):
    """Maximum-marginal-likelihood rose tree over all points of ``model``.

    ``method="enumerate"`` scores every tree and breaks exact ties by fewer
    consistent partitions, then canonical nesting. ``method="dp"`` returns
    the same optimum without enumerating: for a fixed partition of the
    leaves into children, a node's marginal increases with the children's
    marginals, so each child can be optimised separately.
    Returns ``(tree, log_p)`` with the tree scored against ``model``.
    """
    n = model.n_points
    _check_bound(n, limit)
    if method == "enumerate":
        return _optimal_by_enumeration(model, gamma, n)
    if method == "dp":
        return _optimal_by_subsets(model, gamma, n)
    raise ValueError(f"unknown method {method!r}")


def _optimal_by_enumeration(model, gamma, n):
    log_f = {}

    def lp(t):
        key = frozenset(t.leaves())
        if key not in log_f:
            log_f[key] = model.log_f(model.stats_of(sorted(key)))
        if t.is_leaf:
            return log_f[key]
        keep, split = log_mixing(t.n_children, gamma)
        return float(np.logaddexp(keep + log_f[key], split + sum(lp(c) for c in t.children)))

    best, best_score = None, -math.inf
    for t in enumerate_rose_trees(range(n), limit=n):
        s = lp(t)
        if s > best_score or (s == best_score and _tie_key(t) < _tie_key(best)):
            best, best_score = t, s
    scored = score_tree(best, model, gamma)
    return scored, scored.log_p


def _optimal_by_subsets(model, gamma, n):
    full = (1 << n) - 1
    members = [[i for i in range(n) if s >> i & 1] for s in range(full + 1)]
    log_f = np.full(full + 1, np.nan)
    for s in range(1, full + 1):
        log_f[s] = model.log_f(model.stats_of(members[s]))
    opt = np.full(full + 1, -np.inf)
    # split[s][k]: best summed child marginal over partitions of s into k blocks
    split = [dict() for _ in range(full + 1)]
    choice = {}
    by_size = sorted(range(1, full + 1), key=lambda s: bin(s).count("1"))
    for s in by_size:
        size = len(members[s])
        if size == 1:
            opt[s] = log_f[s]
            split[s][1] = (opt[s], None)
            continue
        low = s & -s
        rest_bits = s ^ low
        sub = rest_bits
        # enumerate blocks b containing the lowest element, b a proper subset
        while True:
            b = sub | low
            if b != s:
                rem = s ^ b
                for k, (val, _) in split[rem].items():
                    cand = opt[b] + val
                    cur = split[s].get(k + 1)
                    if cur is None or cand > cur[0]:
                        split[s][k + 1] = (cand, (b, rem, k))
            if sub == 0:
                break
            sub = (sub - 1) & rest_bits
        best, best_k = -np.inf, None
        for k in sorted(split[s]):
            if k < 2:
                continue
            keep, spl = log_mixing(k, gamma)
            v = float(np.logaddexp(keep + log_f[s], spl + split[s][k][0]))
            if v > best:
                best, best_k = v, k
        opt[s] = best
        choice[s] = best_k
        split[s][1] = (best, None)

    def blocks_of(s, k):
        out = []
        while k > 1:
            _, (b, rem, kk) = split[s][k]
            out.append(b)
            s, k = rem, kk
        out.append(s)
        return out

    def rebuild(s):
        if len(members[s]) == 1:
            return leaf(members[s][0])
        return node([rebuild(b) for b in blocks_of(s, choice[s])], check=False)

    tree = score_tree(rebuild(full), model, gamma)
    return tree, tree.log_p


def delta_l(optimal, greedy, l):
    """Mean excess code length, in bits per data vector, of greedy trees.

    ``optimal`` and ``greedy`` are parallel sequences of trees (their cached
    ``log_p`` is used) or of natural-log marginal likelihoods.
    """
    opt = np.array([getattr(t, "log_p", t) for t in optimal], dtype=float)
    grd = np.array([getattr(t, "log_p", t) for t in greedy], dtype=float)
    if opt.shape != grd.shape:
        raise ValueError("optimal and greedy sequences must have the same length")
    if opt.size == 0:
        raise ValueError("need at least one dataset")
    return float(np.sum(opt - grd) / (l * opt.size * LN2))


def optimality_trial(n, dims, gamma, rng, alpha=1.0, beta=1.0):
    """One dataset from a uniformly random rose tree, scored three ways.

    Returns ``(optimal_log_p, rose_log_p, binary_log_p)``.
    """
    hyper = Hyperparams(gamma, np.full(dims, alpha), np.full(dims, beta))
    shape = random_rose_tree(range(n), rng)
    data = sample_dataset(shape, hyper, seed=rng)
    model = BetaBernoulli.from_hyperparams(data, hyper)
    _, opt = optimal_tree(model, gamma)
    rose = build(model, gamma, "rose").log_p
    binary = build(model, gamma, "binary").log_p
    return opt, rose, binary


def optimality_experiment(sizes, trials=100, dims=64, gamma=0.5, seed=0, hit_tol=1e-9):
    """Greedy-vs-optimal comparison for each dataset size in ``sizes``.

    Returns one dict per size with mean and standard error of the excess
    bits per vector for the rose builder (``brt``) and the join-only builder
    (``bhc``), and the fraction of trials where each reached the optimum.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        res = np.array([optimality_trial(n, dims, gamma, rng) for _ in range(trials)])
        opt, rose, binary = res.T
        row = {"n": int(n), "trials": int(trials)}
        for name, got in (("brt", rose), ("bhc", binary)):
            per = (opt - got) / (n * LN2)
            row[f"delta_{name}"] = float(per.mean())
            row[f"se_{name}"] = float(per.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
            row[f"hit_{name}"] = float(np.mean(got >= opt - hit_tol * np.maximum(1.0, np.abs(opt))))
        rows.append(row)
    return rows

