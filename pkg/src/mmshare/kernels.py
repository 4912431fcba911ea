"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``MMSHARE_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module for ``name`` ("compiled", "python" or None for the default)."""
    if name is None:
        name = os.environ.get("MMSHARE_BACKEND", "compiled" if _compiled else "python")
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()
BACKEND = "compiled" if _active is _compiled and _compiled is not None else "python"
pair_gain_tensor = _active.pair_gain_tensor
evaluate_candidates = _active.evaluate_candidates
