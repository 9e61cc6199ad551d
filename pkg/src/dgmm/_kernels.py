"""Backend selection for the hot kernels.

The compiled extension is preferred. Set ``DGMM_PURE_PYTHON=1`` in the
environment before import to force the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("DGMM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ext as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

mvn_logpdf = _impl.mvn_logpdf
logsumexp_rows = _impl.logsumexp_rows
categorical = _impl.categorical
affine_gather = _impl.affine_gather
affine_moments = _impl.affine_moments
affine_moments_stats = _impl.affine_moments_stats

__all__ = ["BACKEND", "mvn_logpdf", "logsumexp_rows", "categorical", "affine_gather", "affine_moments",
           "affine_moments_stats"]
