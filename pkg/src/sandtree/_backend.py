"""Backend selection: compiled kernels when available, pure Python otherwise.

Set SANDTREE_BACKEND=python to force the pure-Python kernels (useful for
cross-checking and environments without a C toolchain); any other value,
or an import failure of the compiled module, falls through accordingly.
"""
from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("SANDTREE_BACKEND", "").strip().lower()

if _requested in ("python", "py", "pure"):
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _requested in ("cython", "c", "compiled"):
            raise
        kernels = _pykernels

BACKEND = kernels.BACKEND_NAME


def available_backends():
    out = [_pykernels]
    try:
        from . import _kernels

        out.append(_kernels)
    except ImportError:
        pass
    return out
