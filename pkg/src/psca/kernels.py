"""Backend selection for the hot inner loops.

The compiled extension is used when it imports; otherwise the numpy
fallback is. Set ``PSCA_KERNELS=python`` to force the fallback, or call
:func:`set_backend` at runtime. Callers must look functions up through this
module (``kernels.gather_dot``) so that a backend switch takes effect.
"""

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_NAMES = (
    "prox_l1_box",
    "gather_dot",
    "scatter_axpy",
    "gather_dot_csc",
    "scatter_axpy_csc",
    "cd_sweep",
    "cd_sweep_csc",
    "cd_sweep_hess",
)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKEND = None


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def set_backend(name):
    """Bind the kernel functions to ``"cython"`` or ``"python"``."""
    global BACKEND
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        source = _compiled
    elif name == "python":
        source = _kernels_py
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(source, fn)
    BACKEND = name


_requested = os.environ.get("PSCA_KERNELS", "").strip().lower()
if _requested == "python" or _compiled is None:
    if _requested == "cython":
        logger.warning("PSCA_KERNELS=cython requested but the extension is missing")
    set_backend("python")
else:
    set_backend("cython")
