"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting
SHRUBMAP_FORCE_FALLBACK=1 forces the numpy implementations (used by the
benchmark and the backend-equivalence tests). Both backends produce
bit-identical results, so the choice never affects pipeline outputs.
"""

import os

from . import _numpy

if os.environ.get("SHRUBMAP_FORCE_FALLBACK") == "1":
    _impl = _numpy
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _numpy

BACKEND = _impl.BACKEND
max_bin = _impl.max_bin
apply_trees = _impl.apply_trees

__all__ = ["BACKEND", "max_bin", "apply_trees"]
