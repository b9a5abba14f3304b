"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set ``DEEPRX_KERNELS=numpy`` or ``DEEPRX_KERNELS=compiled`` to force a
backend (the latter raises if the extension was not built).
"""

from __future__ import annotations

import os

from . import _npkernels

_choice = os.environ.get("DEEPRX_KERNELS", "auto").lower()

if _choice == "numpy":
    _impl = _npkernels
    COMPILED = False
else:
    try:
        from . import _convkernels as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _npkernels
        COMPILED = False

BACKEND_NAME = "compiled" if COMPILED else "numpy"

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
