"""Kernel backend selection: compiled extension if built, numpy otherwise.

Set ``MOBRELAY_PURE=1`` in the environment to force the pure backend (used by
the benchmark and for debugging).
"""

import os

if os.environ.get("MOBRELAY_PURE"):
    from . import pure as _impl
else:
    try:
        from . import _speed as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND
waterfill = _impl.waterfill
greedy_fill = _impl.greedy_fill
