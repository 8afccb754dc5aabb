"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy fallback is
used when it is missing.  TSDIFF_KERNELS=py forces the fallback,
TSDIFF_KERNELS=c makes a missing extension a hard error.
"""

import os

_force = os.environ.get("TSDIFF_KERNELS", "").lower()

if _force in ("py", "python"):
    from . import kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _force == "c":
            raise
        from . import kernels_py as kernels
        BACKEND = "python"
