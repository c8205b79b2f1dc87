"""Dispatch to the compiled scoring kernels, falling back to numpy.

Set ``BAYESROSE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("BAYESROSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

bb_merged_log_f = _impl.bb_merged_log_f
select_ops = _impl.select_ops
COMPILED = _impl is not _kernels_py
BACKEND = "cython" if COMPILED else "numpy"

JOIN = _kernels_py.JOIN
ABSORB_INTO_NEW = _kernels_py.ABSORB_INTO_NEW
ABSORB_INTO_PARTNER = _kernels_py.ABSORB_INTO_PARTNER
COLLAPSE = _kernels_py.COLLAPSE
