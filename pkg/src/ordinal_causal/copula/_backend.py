"""Kernel backend selection.

The compiled module is used when it imports; ``ORDINAL_CAUSAL_BACKEND=python``
forces the numpy fallback.
"""

import importlib
import os

from . import _pykernels


def load(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("ordinal_causal.copula._ckernels")
    raise ValueError(f"unknown backend {name!r}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    forced = os.environ.get("ORDINAL_CAUSAL_BACKEND", "").strip().lower()
    if forced:
        return load(forced)
    try:
        return load("cython")
    except ImportError:
        return _pykernels


kernels = _select()
