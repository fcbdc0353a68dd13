"""Backend selection for the hot kernels.

The compiled extension is used when importable, unless ``POINTCORE_PURE=1``
is set in the environment.
"""

import os

from . import _kernels_py

BACKEND = "numpy"
_impl = _kernels_py

if os.environ.get("POINTCORE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

FPFH_DIM = _kernels_py.FPFH_DIM


def spfh(points, normals, indptr, indices):
    return _impl.spfh(points, normals, indptr, indices)


def fpfh(points, spfh_hist, indptr, indices):
    return _impl.fpfh(points, spfh_hist, indptr, indices)


def greedy_select(points, init, s_max, use_min):
    return _impl.greedy_select(points, init, s_max, use_min)


def backends():
    """Mapping of available backend name to kernel module."""
    out = {"numpy": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
