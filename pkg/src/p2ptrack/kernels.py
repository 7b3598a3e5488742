"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the
numpy fallback in ``_pycore``. Set ``P2PTRACK_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from p2ptrack import _pycore

try:
    if os.environ.get("P2PTRACK_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from p2ptrack import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pycore
    BACKEND = "python"

farthest_point_sample = _impl.farthest_point_sample
iou3d_pairs = _impl.iou3d_pairs
voxel_counts = _impl.voxel_counts


def available_backends():
    """Map backend name -> kernel module for every backend that imports."""
    out = {"python": _pycore}
    try:
        from p2ptrack import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out
