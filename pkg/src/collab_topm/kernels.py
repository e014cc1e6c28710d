"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twins run instead.  Setting ``BANDIT_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("BANDIT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

lucb_run = _impl.lucb_run
subset_best_arm_batch = _impl.subset_best_arm_batch
