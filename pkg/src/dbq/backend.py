"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting
``DBQ_KERNELS=numpy`` forces the pure-python fallback (useful for debugging
and for the backend-comparison benchmark).
"""

import os

from . import _kernels_np

if os.environ.get("DBQ_KERNELS", "").lower() in ("numpy", "python", "py"):
    _impl = _kernels_np
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_np

kernels = _impl
numpy_kernels = _kernels_np


def backend_name() -> str:
    return kernels.BACKEND
