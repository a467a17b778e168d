"""Hot array kernels with a numba fast path and a pure-numpy fallback.

The numba implementations are used by default. Set ``SUTUREPOINT_NO_NUMBA=1``
in the environment (before import) to force the numpy path; it is also
selected automatically when numba is not importable. ``BACKEND`` names the
active path. Both implementations share signatures and are cross-checked in
the test suite; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

_flag = os.environ.get("SUTUREPOINT_NO_NUMBA", "").strip()
if _flag not in ("", "0"):
    from . import numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
softargmax3_forward = _impl.softargmax3_forward
softargmax3_backward = _impl.softargmax3_backward

# Memory-bound reshape ops; the vectorized numpy forms are already optimal.
from .numpy_impl import (  # noqa: E402
    maxpool2_backward,
    maxpool2_forward,
    upsample2_backward,
    upsample2_forward,
)

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "upsample2_forward",
    "upsample2_backward",
    "softargmax3_forward",
    "softargmax3_backward",
]
