"""Pick the kernel implementation at import time.

The compiled extension is used when it was built; otherwise, or when
``WLDREG_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy fallback is used.
"""

import os

from . import _fallback

_force_python = os.environ.get("WLDREG_PURE_PYTHON", "") not in ("", "0")

compiled = None
if not _force_python:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else _fallback
BACKEND = "compiled" if compiled is not None else "python"
