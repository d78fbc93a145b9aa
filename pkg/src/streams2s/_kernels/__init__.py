"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

Set ``STREAMS2S_DISABLE_NUMBA=1`` before import to force the numpy path.
Both backends honour the same contracts; they are not bit-identical to each
other, but each is deterministic on its own.
"""

import os

from . import numpy_impl

BACKEND = "numpy"
if os.environ.get("STREAMS2S_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes"):
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:  # numba missing or broken
        _impl = numpy_impl
else:
    _impl = numpy_impl

nearest_code = _impl.nearest_code
centroid_sums = _impl.centroid_sums
oscillator_bank = _impl.oscillator_bank

__all__ = ["BACKEND", "nearest_code", "centroid_sums", "oscillator_bank"]
