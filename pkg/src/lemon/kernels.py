"""Backend selection for the top-k kernel.

The compiled extension is preferred when it imported cleanly; set
``LEMON_KERNEL=python`` to force the numpy fallback (the benchmark and the
backend-parity tests do this).
"""

from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("LEMON_KERNEL", "").lower() in ("python", "py"):
    _impl = _kernel_py
else:
    try:
        from . import _kernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernel_py

topk_cosine = _impl.topk_cosine
topk_euclidean = _impl.topk_euclidean


def backend_name() -> str:
    return _impl.BACKEND


def get_backend(name: str):
    """Explicit backend lookup, used by tests and the kernel benchmark."""
    if name in ("python", "py"):
        return _kernel_py
    if name == "cython":
        from . import _kernel  # raises ImportError when not built

        return _kernel
    raise ValueError(f"unknown kernel backend {name!r}")
