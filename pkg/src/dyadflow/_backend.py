"""Kernel backend chosen at import time.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback. Setting ``DYADFLOW_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

compiled = None
if os.environ.get("DYADFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else _fallback
BACKEND = "compiled" if compiled is not None else "python"
