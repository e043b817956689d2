"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``SELFRANK_BACKEND=numpy`` to force the fallback.
"""
import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)

_forced = os.environ.get("SELFRANK_BACKEND", "").lower()

if _forced == "numpy":
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        if _forced == "cython":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
        kernels = _fallback

BACKEND = kernels.NAME


def use(name):
    """Switch the active backend at runtime ('cython' or 'numpy')."""
    global kernels, BACKEND
    if name == "numpy":
        kernels = _fallback
    elif name == "cython":
        from . import _kernels
        kernels = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = kernels.NAME
    return kernels
