"""Hot row-wise kernels with a numba path and a pure-numpy fallback.

The backend is chosen once, at import, from the ``FWL_BACKEND`` environment
variable (``numba`` or ``numpy``). When unset, numba is used if it imports.
Both backends consume the same uniforms, so sampled labels agree between them;
floating-point sums may differ in the last ulp.
"""
import os

from . import _numpy as numpy_kernels

try:
    from . import _numba as numba_kernels
except ImportError:  # numba is an optional extra
    numba_kernels = None

_requested = os.environ.get("FWL_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"FWL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
if _requested == "numba" and numba_kernels is None:
    raise ImportError("FWL_BACKEND=numba but numba is not installed")

if _requested == "numpy" or numba_kernels is None:
    BACKEND = "numpy"
    _active = numpy_kernels
else:
    BACKEND = "numba"
    _active = numba_kernels

softmax_rows = _active.softmax_rows
ce_logit_grad = _active.ce_logit_grad
sample_inverse_cdf = _active.sample_inverse_cdf
fwl_logit_grad = _active.fwl_logit_grad

__all__ = [
    "BACKEND",
    "numpy_kernels",
    "numba_kernels",
    "softmax_rows",
    "ce_logit_grad",
    "sample_inverse_cdf",
    "fwl_logit_grad",
]
