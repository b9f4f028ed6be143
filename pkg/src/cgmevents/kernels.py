"""Backend selection for the hot loops.

The compiled extension is used when importable; set
``CGMEVENTS_PURE_PYTHON=1`` to force the numpy fallback.
"""
import importlib
import os

from . import _kernels_py

_FALLBACK = _kernels_py


def _load_compiled():
    try:
        return importlib.import_module("cgmevents._kernels")
    except ImportError:
        return None


_COMPILED = _load_compiled()

if os.environ.get("CGMEVENTS_PURE_PYTHON", "") not in ("", "0") or _COMPILED is None:
    impl = _FALLBACK
    BACKEND = "python"
else:
    impl = _COMPILED
    BACKEND = "cython"


def available_backends():
    names = ["python"]
    if _COMPILED is not None:
        names.insert(0, "cython")
    return names


def get_backend(name):
    if name == "python":
        return _FALLBACK
    if name == "cython":
        if _COMPILED is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _COMPILED
    raise ValueError(f"unknown backend {name!r}")
