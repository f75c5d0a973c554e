"""Pick the compiled event loop when it is built, else the Python one.

Set ``LMSCHED_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("LMSCHED_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernel as _compiled
    except ImportError:
        _compiled = None

python_simulate = _kernel_py.simulate
compiled_simulate = _compiled.simulate if _compiled is not None else None
simulate = compiled_simulate or python_simulate
KIND = _compiled.KIND if _compiled is not None else _kernel_py.KIND
