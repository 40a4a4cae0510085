"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when importable; otherwise the
pure-Python twin in ``_kernels_py``.  Setting ``VPASS_PURE_PYTHON=1`` forces
the fallback.
"""

import os

from vpass import _kernels_py

if os.environ.get("VPASS_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from vpass import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

response = _impl.response
scan_c = _impl.scan_c
consistent_keys = _impl.consistent_keys
reachable_keys_modified = _impl.reachable_keys_modified


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _kernels_py}
    try:
        from vpass import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
