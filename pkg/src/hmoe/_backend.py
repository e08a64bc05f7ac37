"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-numpy fallback is used. HMOE_BACKEND={cython,numpy} forces a
choice (raising if the compiled extension was requested but is not
built).
"""

import os

from . import _kernels_np

_requested = os.environ.get("HMOE_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = _kernels_np
elif _requested == "cython":
    from . import _kernels as _impl
elif _requested == "":
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_np
else:
    raise ValueError(f"unknown HMOE_BACKEND {_requested!r} (use 'cython' or 'numpy')")

BACKEND = _impl.BACKEND_NAME
mix_forward = _impl.mix_forward
mix_backward = _impl.mix_backward


def available_backends():
    """Names of the importable kernel backends."""
    names = []
    try:
        from . import _kernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    names.append("numpy")
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
