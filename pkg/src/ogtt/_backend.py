"""Select the kernel backend at import time.

The compiled extension is used when importable; setting ``OGTT_PURE_PYTHON=1``
forces the pure-Python fallback.
"""

import os

from . import _pykernels

kernels = _pykernels
if not os.environ.get("OGTT_PURE_PYTHON"):
    try:
        from . import _ckernels as kernels  # noqa: F811
    except ImportError:
        pass

BACKEND = kernels.BACKEND
