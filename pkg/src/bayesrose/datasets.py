"""Synthetic datasets used by the experiments and the CLI."""
import numpy as np

from .gp_experts import interlaced_curves  # noqa: F401


def toy_dataset(seed=0, n_per_class=16, block_width=4, n_classes=3, density=0.75):
    """Binary matrix whose classes put 1s only in their own block of columns.

    The defaults give 48 rows and 12 columns. Returns ``(data, labels)``.
    """
    rng = np.random.default_rng(seed)
    n = n_per_class * n_classes
    data = np.zeros((n, block_width * n_classes), dtype=np.int64)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    for c in range(n_classes):
        rows = slice(c * n_per_class, (c + 1) * n_per_class)
        cols = slice(c * block_width, (c + 1) * block_width)
        data[rows, cols] = rng.random((n_per_class, block_width)) < density
    return data, labels
