"""Kernel backend selection.

The compiled extension is used when it imports; set ``BANDCAST_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _kernels_py

kernels = _kernels_py
if not os.environ.get("BANDCAST_PURE_PYTHON"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME


def available():
    """Return the names of every importable kernel backend."""
    names = [_kernels_py.NAME]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return names
    return ["cython"] + names


def get(name=None):
    """Return the kernel module ``name`` (``"cython"`` or ``"python"``), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
