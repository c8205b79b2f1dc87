"""Pure numpy implementation of the builder's scoring kernels.

Signatures match the compiled ``_ckernels`` module exactly; see
:mod:`bayesrose.kernels` for the dispatch.
"""
import numpy as np

JOIN, ABSORB_INTO_NEW, ABSORB_INTO_PARTNER, COLLAPSE = 0, 1, 2, 3


def bb_merged_log_f(counts, sizes, slot, partners, lg_alpha, lg_beta, lg_total, offset):
    """Beta-Bernoulli ``log f`` of ``slot`` merged with each partner slot.

    Accumulates column by column in the compiled kernel's order, so both
    backends give bit-identical scores and break ties the same way.
    """
    n = counts[partners] + counts[slot]
    N = sizes[partners] + sizes[slot]
    acc = offset - lg_total[N]
    for i in range(counts.shape[1]):
        acc += lg_alpha[n[:, i], i] + lg_beta[N - n[:, i], i]
    return acc


def select_ops(log_f, lp_a, cp_a, k_a, lp_b, cp_b, k_b, log_pi, log_1mpi, rose):
    """Best merge operation and its log likelihood ratio for each partner.

    ``a`` is the newly created tree, ``b`` the partners. ``cp`` is the summed
    log marginal of a tree's children and ``k`` its child count (0 for a
    leaf). Operations are tried join, absorb-into-new, absorb-into-partner,
    collapse, and a later one wins an exact tie, so simpler merges win.
    """
    lp_b = np.asarray(lp_b, dtype=float)
    base = lp_a + lp_b
    best = np.logaddexp(log_pi[2] + log_f, log_1mpi[2] + base) - base
    op = np.full(lp_b.shape[0], JOIN, dtype=np.int8)
    if not rose:
        return best, op
    b_internal = k_b > 0
    if k_a > 0:
        k = k_a + 1
        s = np.logaddexp(log_pi[k] + log_f, log_1mpi[k] + cp_a + lp_b) - base
        take = s >= best
        best = np.where(take, s, best)
        op[take] = ABSORB_INTO_NEW
    kb = np.where(b_internal, k_b + 1, 2)
    s = np.logaddexp(log_pi[kb] + log_f, log_1mpi[kb] + lp_a + cp_b) - base
    take = b_internal & (s >= best)
    best = np.where(take, s, best)
    op[take] = ABSORB_INTO_PARTNER
    if k_a > 0:
        kc = np.where(b_internal, k_a + k_b, 2)
        s = np.logaddexp(log_pi[kc] + log_f, log_1mpi[kc] + cp_a + cp_b) - base
        take = b_internal & (s >= best)
        best = np.where(take, s, best)
        op[take] = COLLAPSE
    return best, op
