"""Kernel selection: compiled extension when available, numpy otherwise.

Set ``QSDLAB_BACKEND=python`` to force the numpy kernels.
"""

from __future__ import annotations

import os

from . import _fallback as fallback

compiled = None
if os.environ.get("QSDLAB_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

BACKEND = "compiled" if compiled is not None else "python"


def kernels(family: bool, backend: str | None = None):
    """Return the kernel module for a run.

    Parameters
    ----------
    family : bool
        Whether the model belongs to the theta-logistic family (the only
        family with compiled kernels).
    backend : {"compiled", "python"}, optional
        Explicit choice; ``None`` selects the fastest available.
    """
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not available")
        if not family:
            return fallback
        return compiled
    if backend == "python":
        return fallback
    raise ValueError(f"unknown backend {backend!r}")
