"""Backend selection for the hot per-pixel kernels.

The environment variable STEREOVO_NUMBA picks the implementation:

* unset or "auto": numba if importable, else the pure-numpy fallback,
* "0"/"off"/"false": force the numpy fallback,
* "1"/"on"/"force": require numba, raise if it is missing.

Both backends satisfy the same contracts; tests compare them on random
inputs and benchmarks/bench_kernels.py times them side by side.
"""

import os

_mode = os.environ.get("STEREOVO_NUMBA", "auto").strip().lower()

if _mode in ("0", "off", "false", "no"):
    from . import numpy_ops as active

    HAS_NUMBA = False
    BACKEND = "numpy"
else:
    try:
        from . import numba_ops as active

        HAS_NUMBA = True
        BACKEND = "numba"
    except ImportError:
        if _mode in ("1", "on", "true", "yes", "force"):
            raise
        from . import numpy_ops as active

        HAS_NUMBA = False
        BACKEND = "numpy"

box_sum3 = active.box_sum3
bilinear_forward = active.bilinear_forward
bilinear_scatter = active.bilinear_scatter
temporal_map_grad = active.temporal_map_grad
geo_direction = active.geo_direction
