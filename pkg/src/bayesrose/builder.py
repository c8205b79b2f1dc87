"""Greedy agglomerative construction of rose trees.

Starting from one leaf per data point, the builder repeatedly merges the pair
of trees and merge operation with the highest likelihood ratio

    p(leaves(Tm) | Tm) / (p(leaves(Ti) | Ti) p(leaves(Tj) | Tj))

until one tree remains. Four operations are scored for every pair: join
(new parent over both), absorb in either direction (one tree becomes a child
of the other's root) and collapse (the two roots' child lists are fused).
Restricting the search to joins gives constant-gamma binary Bayesian
hierarchical clustering.

Candidates live in a binary heap. When trees are merged their candidates are
left in the heap and skipped when popped, so each merge costs one batch of
scores against the remaining trees plus heap pushes.
"""
from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import leaf, log_mixing_table, node


class Op(enum.IntEnum):
    """Merge operations; ``left`` and ``right`` are the two merged trees."""

    JOIN = kernels.JOIN
    ABSORB_INTO_LEFT = kernels.ABSORB_INTO_NEW
    ABSORB_INTO_RIGHT = kernels.ABSORB_INTO_PARTNER
    COLLAPSE = kernels.COLLAPSE

    @property
    def rank(self):
        """Tie-break order: fewer consistent partitions first."""
        return {Op.COLLAPSE: 0, Op.ABSORB_INTO_LEFT: 1, Op.ABSORB_INTO_RIGHT: 1, Op.JOIN: 2}[self]


_RANK = np.array([Op(i).rank for i in range(4)])

MODES = {"rose": True, "binary": False, "binary_only": False}


@dataclass(frozen=True)
class MergeCandidate:
    left_id: int
    right_id: int
    op: Op
    log_ratio: float


def apply_merge(ti, tj, op, model=None, gamma=None, node_id=None):
    """Merged tree for ``ti`` and ``tj`` under ``op``.

    Scored against ``model`` and ``gamma`` when both are given, in which case
    the operands must carry cached statistics and marginals.
    """
    op = Op(op)
    if op in (Op.ABSORB_INTO_LEFT, Op.COLLAPSE) and ti.is_leaf:
        raise ValueError(f"{op.name.lower()} needs an internal left tree")
    if op in (Op.ABSORB_INTO_RIGHT, Op.COLLAPSE) and tj.is_leaf:
        raise ValueError(f"{op.name.lower()} needs an internal right tree")
    if not set(ti.leaves()).isdisjoint(tj.leaves()):
        raise ValueError("merged trees must have disjoint leaves")
    left = [ti] if op in (Op.JOIN, Op.ABSORB_INTO_RIGHT) else list(ti.children)
    right = [tj] if op in (Op.JOIN, Op.ABSORB_INTO_LEFT) else list(tj.children)
    stats = None
    if model is not None:
        stats = model.merge_stats(ti.stats, tj.stats)
    return node(left + right, model, gamma, node_id, check=False, stats=stats)


def log_likelihood_ratio(tm, ti, tj):
    """Log of the merge score: marginal of ``tm`` over those of its operands."""
    return tm.log_p - ti.log_p - tj.log_p


class Forest:
    """Live trees plus the heap of scored merge candidates."""

    def __init__(self, model, gamma, mode="rose"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected 'rose' or 'binary'")
        n = model.n_points
        if n < 1:
            raise ValueError("cannot build a tree over an empty dataset")
        self.model = model
        self.gamma = float(gamma)
        self.rose = MODES[mode]
        capacity = 2 * n - 1
        self.pool = model.pool(capacity)
        self.trees = {}
        self.alive = np.zeros(capacity, dtype=bool)
        self.log_p = np.zeros(capacity)
        self.child_log_p = np.zeros(capacity)
        self.n_children = np.zeros(capacity, dtype=np.int64)
        self.log_keep, self.log_split = log_mixing_table(n, self.gamma)
        self.heap = []
        self.next_id = n
        self.merges = 0
        self.stale_popped = 0
        for i in range(n):
            self._add(leaf(i, model))
        for i in range(n - 1):
            self._push_scores(i, np.arange(i + 1, n), heapify=False)
        heapq.heapify(self.heap)

    def _add(self, tree):
        i = tree.node_id
        self.trees[i] = tree
        self.pool.put(i, tree.stats)
        self.alive[i] = True
        self.log_p[i] = tree.log_p
        self.n_children[i] = tree.n_children
        self.child_log_p[i] = sum(c.log_p for c in tree.children)

    def score(self, a, partners):
        """Best operation and log ratio for merging tree ``a`` with each partner."""
        partners = np.asarray(partners, dtype=np.int64)
        log_f = self.pool.merged_log_f(a, partners)
        return kernels.select_ops(
            log_f, self.log_p[a], self.child_log_p[a], int(self.n_children[a]),
            self.log_p[partners], self.child_log_p[partners], self.n_children[partners],
            self.log_keep, self.log_split, self.rose)

    def _push_scores(self, a, partners, heapify=True):
        if partners.size == 0:
            return
        ratio, op = self.score(a, partners)
        if not np.all(np.isfinite(ratio)):
            raise FloatingPointError("non-finite merge score")
        lo = np.minimum(partners, a)
        hi = np.maximum(partners, a)
        rank = _RANK[op]
        entries = zip((-ratio).tolist(), rank.tolist(), lo.tolist(), hi.tolist(),
                      partners.tolist(), op.tolist())
        if heapify:
            for e in entries:
                heapq.heappush(self.heap, (e[0], e[1], e[2], e[3], a, e[4], e[5]))
        else:
            self.heap.extend((e[0], e[1], e[2], e[3], a, e[4], e[5]) for e in entries)

    def live_candidates(self):
        """Candidates whose trees are both still live, best first."""
        out = [MergeCandidate(e[4], e[5], Op(e[6]), -e[0]) for e in sorted(self.heap)
               if self.alive[e[4]] and self.alive[e[5]]]
        return out

    def __len__(self):
        return len(self.trees)

    def step(self):
        """Perform the best live merge; returns the merged tree."""
        while self.heap:
            _, _, _, _, a, b, op = heapq.heappop(self.heap)
            if self.alive[a] and self.alive[b]:
                break
            self.stale_popped += 1
        else:
            raise RuntimeError("no live merge candidates")
        ta, tb = self.trees.pop(a), self.trees.pop(b)
        self.alive[a] = self.alive[b] = False
        merged = apply_merge(ta, tb, op, self.model, self.gamma, node_id=self.next_id)
        self.next_id += 1
        self.merges += 1
        refresh_candidates(self, merged)
        self._compact()
        return merged

    def _compact(self):
        # each live pair has exactly one entry; drop stale ones once they dominate
        live = len(self.trees)
        if len(self.heap) > live * (live - 1) + 64:
            alive = self.alive.tolist()
            self.heap = [e for e in self.heap if alive[e[4]] and alive[e[5]]]
            heapq.heapify(self.heap)

    def run(self):
        while len(self.trees) > 1:
            self.step()
        (tree,) = self.trees.values()
        return tree


def refresh_candidates(forest, merged_tree):
    """Register ``merged_tree`` and score it against every live tree.

    Candidates touching the trees it replaced stay in the heap and are
    discarded when popped.
    """
    forest._add(merged_tree)
    partners = np.flatnonzero(forest.alive)
    partners = partners[partners != merged_tree.node_id]
    forest._push_scores(merged_tree.node_id, partners)
    return forest


def build(model, gamma, mode="rose"):
    """Greedy rose tree over all points of ``model``.

    ``mode="binary"`` allows joins only. Node ids are ``0..n-1`` for leaves
    and increase with merge order for internal nodes.
    """
    return Forest(model, gamma, mode).run()
