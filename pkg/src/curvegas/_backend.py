"""Select the compiled kernels when available, else the numpy fallback.

Set ``CURVEGAS_BACKEND=python`` to force the fallback, ``cython`` to require
the extension.
"""

import importlib
import os

from . import _kernels_py

_NAMES = {"cython": "curvegas._kernels", "python": "curvegas._kernels_py"}


def load(name="auto"):
    if name == "auto":
        try:
            return importlib.import_module(_NAMES["cython"])
        except ImportError:
            return _kernels_py
    if name not in _NAMES:
        raise ValueError(f"unknown backend {name!r}; expected auto, cython or python")
    return importlib.import_module(_NAMES[name])


def available():
    names = ["python"]
    try:
        importlib.import_module(_NAMES["cython"])
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


kernels = load(os.environ.get("CURVEGAS_BACKEND", "auto"))
BACKEND = kernels.BACKEND
