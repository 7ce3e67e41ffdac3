"""Backend selection for the hot simulation kernels.

Prefers the compiled extension; falls back to the pure-Python twin when the
extension is unavailable. Set ``CRASHBENCH_PURE_PYTHON=1`` to force the
fallback (useful for the backend-parity tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("CRASHBENCH_PURE_PYTHON"):
    from crashbench import _kernels_py as _impl
else:
    try:
        from crashbench import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from crashbench import _kernels_py as _impl

BACKEND: str = _impl.BACKEND
wrap_angle = _impl.wrap_angle
bicycle_step = _impl.bicycle_step
obb_max_gap = _impl.obb_max_gap
