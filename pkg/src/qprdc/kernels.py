"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy versions in
``_pykernels`` take over. Set ``QPRDC_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels
compiled_backend = None

if not os.environ.get("QPRDC_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if backend is compiled_backend else "numpy"

bvn_cdf = backend.bvn_cdf
rect_probs = backend.rect_probs
mc_counts = backend.mc_counts

_threads = 0


def set_threads(n: int) -> None:
    """Cap the worker count used by the compiled kernels (0 means one thread)."""
    global _threads
    _threads = max(0, int(n))


def get_threads() -> int:
    return _threads
