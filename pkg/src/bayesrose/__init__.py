"""Bayesian rose trees: non-binary Bayesian hierarchical clustering."""
from .core import (
    EnumerationLimitError,
    Partition,
    RoseTree,
    brute_force_marginal,
    count_partitions,
    enumerate_partitions,
    from_nested,
    leaf,
    log_marginal,
    mixing_proportion,
    node,
    partition_log_likelihood,
    partition_prior,
    sample_dataset,
    score_tree,
    to_nested,
)
from .likelihood import BetaBernoulli, ClusterStats, Hyperparams

__version__ = "0.1.0"
