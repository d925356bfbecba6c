"""Hot numeric kernels with a compiled core and a pure-Python fallback.

Two operations dominate full-dataset runtime: the exhaustive sliding-window
point-density search and the yawed-rectangle intersection used by the BEV
IoU. Both exist twice with identical semantics:

    badfusion.kernels._fast       Cython extension (built by setup.py)
    badfusion.kernels._reference  numpy / pure Python

The compiled module is selected at import when available; set the
environment variable BADFUSION_KERNELS=python to force the fallback.
``BACKEND`` names the active implementation.
"""

import os

from . import _reference

if os.environ.get("BADFUSION_KERNELS", "").strip().lower() == "python":
    _impl = _reference
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _reference
        BACKEND = "python"

densest_window = _impl.densest_window
rect_intersection_area = _impl.rect_intersection_area
rect_corners = _reference.rect_corners

__all__ = ["densest_window", "rect_intersection_area", "rect_corners", "BACKEND"]
