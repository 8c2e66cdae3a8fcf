"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``LIMITVALUE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if not os.environ.get("LIMITVALUE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        BACKEND = "cython"
else:
    _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py

backward_sweep = _impl.backward_sweep
min_closure = _impl.min_closure

__all__ = ["BACKEND", "backward_sweep", "min_closure"]
