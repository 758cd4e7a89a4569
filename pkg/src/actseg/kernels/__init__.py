"""Hot numeric kernels with selectable backend.

The numba-jitted kernels are the default. Set ACTSEG_KERNELS=numpy to force
the vectorized numpy fallback (also used automatically when numba cannot be
imported). `benchmarks/bench_kernels.py` compares the two.
"""

import os

_requested = os.environ.get("ACTSEG_KERNELS", "numba").strip().lower()

if _requested not in ("numba", "numpy"):
    raise ValueError(f"ACTSEG_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl
        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl
    BACKEND = "numpy"

bilinear_resize = _impl.bilinear_resize
im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_backward = _impl.maxpool2x2_backward
gaussian_logpdf = _impl.gaussian_logpdf
accumulate_votes = _impl.accumulate_votes


def backend_name() -> str:
    return BACKEND
