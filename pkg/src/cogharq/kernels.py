"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy
implementation is used. Set ``COGHARQ_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("COGHARQ_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"

decodable_mask = _impl.decodable_mask
rate_threshold = _impl.rate_threshold
threshold_grid_counts = _impl.threshold_grid_counts
simulate_chunk = _impl.simulate_chunk


def implementations():
    """All importable backends, keyed by name (used by tests and benchmarks)."""
    impls = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        impls["cython"] = _ckernels
    return impls
