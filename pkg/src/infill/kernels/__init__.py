"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the numpy
reference implementations take over with identical semantics.  Setting
INFILL_NO_EXT=1 in the environment forces the numpy backend (useful for the
fallback benchmark and for debugging).
"""

import os

from . import numpy_ref

if os.environ.get("INFILL_NO_EXT"):
    ops = numpy_ref
else:
    try:
        from . import _ckernels as ops  # type: ignore[no-redef]
    except ImportError:
        ops = numpy_ref


def backend_name():
    """Name of the active kernel backend: 'compiled' or 'numpy'."""
    return ops.NAME
