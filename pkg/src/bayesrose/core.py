"""Rose trees as mixtures over tree-consistent partitions.

A rose tree is a leaf holding one data index or an internal node with two or
more child rose trees over disjoint leaf sets. Each internal node ``T`` keeps
its leaves in one cluster with prior probability ``pi_T`` and otherwise
recurses into its children, which gives the marginal likelihood the
dynamic-programming form computed by :func:`log_marginal`. The partition
enumeration routines here are exponential and exist as oracles for it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

_ids = itertools.count(1 << 40)


class EnumerationLimitError(ValueError):
    """Raised when an exhaustive computation would exceed its size bound."""


def mixing_proportion(n_children, gamma):
    """Prior probability that a node with ``n_children`` children is kept whole."""
    if n_children < 2:
        raise ValueError("mixing proportions are defined for nodes with >= 2 children")
    if n_children == 2:
        return float(gamma)
    return float(-math.expm1((n_children - 1) * math.log1p(-gamma)))


def log_mixing(n_children, gamma):
    """``(log pi, log(1 - pi))`` for a node with ``n_children`` children."""
    if n_children < 2:
        raise ValueError("mixing proportions are defined for nodes with >= 2 children")
    log_split = (n_children - 1) * math.log1p(-gamma)
    if n_children == 2:
        return math.log(gamma), log_split
    return math.log(-math.expm1(log_split)), log_split


def log_mixing_table(max_children, gamma):
    """Vectorised :func:`log_mixing` for child counts ``0..max_children``.

    Entries for counts below 2 are ``nan`` and never read.
    """
    k = np.arange(max(max_children, 2) + 1, dtype=float)
    log_split = (k - 1) * math.log1p(-gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_keep = np.log(-np.expm1(log_split))
    log_keep[2] = math.log(gamma)
    log_keep[:2] = np.nan
    log_split[:2] = np.nan
    return log_keep, log_split


@dataclass(frozen=True, eq=False, repr=False)
class RoseTree:
    """Immutable rose tree node with cached cluster quantities.

    ``stats``, ``log_f`` and ``log_p`` are filled in when the node is built
    against a cluster model; structure-only trees leave them unset.
    Children are kept sorted by their smallest data index.
    """

    node_id: int
    children: tuple = ()
    data_index: int | None = None
    n_leaves: int = 1
    min_leaf: int = 0
    stats: object = None
    log_f: float = math.nan
    log_p: float = math.nan

    @property
    def is_leaf(self):
        return self.data_index is not None

    @property
    def n_children(self):
        return len(self.children)

    def leaves(self):
        """Sorted data indices under this node."""
        out = []
        stack = [self]
        while stack:
            t = stack.pop()
            if t.is_leaf:
                out.append(t.data_index)
            else:
                stack.extend(t.children)
        out.sort()
        return out

    def postorder(self):
        """Nodes in post-order (children before parents), without recursion."""
        out = []
        stack = [(self, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded or t.is_leaf:
                out.append(t)
            else:
                stack.append((t, True))
                stack.extend((c, False) for c in reversed(t.children))
        return out

    def __repr__(self):
        return f"RoseTree({to_nested(self)!r})"


def leaf(index, model=None, node_id=None):
    """Leaf for data row ``index``; scored when ``model`` is given."""
    index = int(index)
    if model is None:
        return RoseTree(index if node_id is None else node_id, (), index, 1, index)
    stats = model.leaf_stats(index)
    lf = _checked(model.log_f(stats))
    return RoseTree(index if node_id is None else node_id, (), index, 1, index, stats, lf, lf)


def node(children, model=None, gamma=None, node_id=None, check=True, stats=None):
    """Internal node over ``children``.

    With a model and ``gamma`` the node's statistics and marginals are
    computed from the children's caches, which must already be filled.
    ``stats`` may be passed when the merged statistics are already known.
    """
    children = tuple(sorted(children, key=lambda c: c.min_leaf))
    if len(children) < 2:
        raise ValueError("internal nodes need at least two children")
    n_leaves = sum(c.n_leaves for c in children)
    if check:
        union = set()
        for c in children:
            union.update(c.leaves())
        if len(union) != n_leaves:
            raise ValueError("children of a rose tree node must have disjoint leaves")
    node_id = next(_ids) if node_id is None else node_id
    if model is None:
        return RoseTree(node_id, children, None, n_leaves, children[0].min_leaf)
    if stats is None:
        stats = children[0].stats
        for c in children[1:]:
            stats = model.merge_stats(stats, c.stats)
    lf = _checked(model.log_f(stats))
    lp = _node_log_p(len(children), lf, sum(c.log_p for c in children), gamma)
    return RoseTree(node_id, children, None, n_leaves, children[0].min_leaf, stats, lf, lp)


def _checked(value):
    value = float(value)
    if math.isnan(value):
        raise FloatingPointError("cluster model returned NaN")
    return value


def _node_log_p(n_children, log_f, children_log_p, gamma):
    log_keep, log_split = log_mixing(n_children, gamma)
    return float(np.logaddexp(log_keep + log_f, log_split + children_log_p))


def from_nested(nested, model=None, gamma=None):
    """Build a tree from nested sequences of data indices, e.g. ``((0, 1), 2)``."""
    if isinstance(nested, (int, np.integer)):
        return leaf(nested, model)
    return node([from_nested(s, model, gamma) for s in nested], model, gamma)


def to_nested(tree):
    """Nested tuples of data indices; equal for trees with the same topology."""
    if tree.is_leaf:
        return tree.data_index
    return tuple(to_nested(c) for c in tree.children)


def score_tree(tree, model, gamma):
    """Copy of ``tree`` (same ids and structure) with caches recomputed."""
    rebuilt = {}
    for t in tree.postorder():
        if t.is_leaf:
            rebuilt[id(t)] = leaf(t.data_index, model, t.node_id)
        else:
            kids = [rebuilt[id(c)] for c in t.children]
            rebuilt[id(t)] = node(kids, model, gamma, t.node_id, check=False)
    return rebuilt[id(tree)]


def log_marginal(tree, model, gamma):
    """Log marginal likelihood of the data under the rose tree mixture."""
    return score_tree(tree, model, gamma).log_p


@dataclass(frozen=True)
class Partition:
    """Set of disjoint, non-empty blocks of data indices."""

    blocks: frozenset

    def __post_init__(self):
        blocks = frozenset(frozenset(int(i) for i in b) for b in self.blocks)
        seen = 0
        for b in blocks:
            if not b:
                raise ValueError("partition blocks must be non-empty")
            seen += len(b)
        if seen != len(frozenset().union(*blocks)):
            raise ValueError("partition blocks must be disjoint")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def of(cls, *blocks):
        return cls(frozenset(frozenset(b) for b in blocks))

    @property
    def ground(self):
        return frozenset().union(*self.blocks)

    def sorted_blocks(self):
        return sorted((sorted(b) for b in self.blocks), key=lambda b: b[0])

    def __len__(self):
        return len(self.blocks)

    def __str__(self):
        return "|".join(",".join(map(str, b)) for b in self.sorted_blocks())


def count_partitions(tree):
    """Number of partitions consistent with ``tree`` (exact integer)."""
    counts = {}
    for t in tree.postorder():
        if t.is_leaf:
            counts[id(t)] = 1
        else:
            counts[id(t)] = 1 + math.prod(counts[id(c)] for c in t.children)
    return counts[id(tree)]


def enumerate_partitions(tree, limit=1_000_000):
    """All partitions consistent with ``tree``, complete partition first."""
    if count_partitions(tree) > limit:
        raise EnumerationLimitError(
            f"tree has {count_partitions(tree)} consistent partitions (limit {limit})")
    return [Partition(frozenset(p)) for p in _partitions(tree)]


def _partitions(tree):
    whole = [frozenset([frozenset(tree.leaves())])]
    if tree.is_leaf:
        return whole
    parts = [_partitions(c) for c in tree.children]
    return whole + [frozenset().union(*combo) for combo in itertools.product(*parts)]


def partition_log_prior(tree, phi, gamma):
    """Log prior mass of partition ``phi`` under ``tree``.

    Raises ``ValueError`` if ``phi`` is not consistent with the tree.
    """
    blocks = phi.blocks
    if phi.ground != frozenset(tree.leaves()):
        raise ValueError("partition does not cover the tree's leaves")
    total = 0.0
    stack = [tree]
    while stack:
        t = stack.pop()
        if frozenset(t.leaves()) in blocks:
            if not t.is_leaf:
                total += log_mixing(t.n_children, gamma)[0]
        elif t.is_leaf:
            raise ValueError(f"partition {phi} is not consistent with the tree")
        else:
            total += log_mixing(t.n_children, gamma)[1]
            stack.extend(t.children)
    return total


def partition_prior(tree, phi, gamma):
    return math.exp(partition_log_prior(tree, phi, gamma))


def partition_log_likelihood(phi, model):
    """Sum of cluster log marginals over the blocks of ``phi``."""
    return sum(model.log_f(model.stats_of(sorted(b))) for b in phi.blocks)


def brute_force_marginal(tree, model, gamma, limit=100_000):
    """Log marginal likelihood by explicit summation over consistent partitions.

    Independent of the recursion in :func:`log_marginal` and used to check it.
    """
    if tree.is_leaf:
        return model.log_f(model.stats_of([tree.data_index]))
    cache = {}

    def block_log_f(b):
        if b not in cache:
            cache[b] = model.log_f(model.stats_of(sorted(b)))
        return cache[b]

    terms = [partition_log_prior(tree, phi, gamma) + sum(block_log_f(b) for b in phi.blocks)
             for phi in enumerate_partitions(tree, limit)]
    return float(logsumexp(terms))


def sample_partition(tree, gamma, rng):
    """Draw a consistent partition by recursive keep-or-split coin flips."""
    blocks = []
    stack = [tree]
    while stack:
        t = stack.pop()
        if t.is_leaf or rng.random() < mixing_proportion(t.n_children, gamma):
            blocks.append(frozenset(t.leaves()))
        else:
            stack.extend(t.children)
    return Partition(frozenset(blocks))


def sample_dataset(tree, hyper, dims=None, seed=None, return_partition=False):
    """Binary data drawn from the rose tree mixture.

    A partition is sampled from the tree's prior; each block then draws one
    Bernoulli parameter vector from the beta prior and its rows from that.
    Row ``i`` of the result belongs to the leaf with data index ``i``.
    """
    rng = np.random.default_rng(seed)
    dims = hyper.dims if dims is None else int(dims)
    if dims < 1:
        raise ValueError("dims must be >= 1")
    alpha = np.broadcast_to(hyper.alpha, (dims,))
    beta = np.broadcast_to(hyper.beta, (dims,))
    n = tree.n_leaves
    if sorted(tree.leaves()) != list(range(n)):
        raise ValueError("tree leaves must be the indices 0..n-1")
    phi = sample_partition(tree, hyper.gamma, rng)
    data = np.empty((n, dims), dtype=np.int64)
    for block in phi.sorted_blocks():
        theta = rng.beta(alpha, beta)
        data[block] = rng.random((len(block), dims)) < theta
    if return_partition:
        return data, phi
    return data


def relabel(tree, mapping):
    """Copy of a structure-only ``tree`` with data indices renamed via ``mapping``."""
    if tree.is_leaf:
        i = int(mapping[tree.data_index])
        return replace(tree, node_id=i, data_index=i, min_leaf=i)
    return node([relabel(c, mapping) for c in tree.children], check=False)
