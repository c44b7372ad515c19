"""Resampling kernel backends.

The compiled extension and the numpy fallback implement the same operation:
given one shared design matrix and a residual matrix for K outcomes, compute
the exposure coefficient and its classical standard error for every outcome
under B joint row resamples of the residuals.  The backend is chosen once at
import; set ``OUTCOMEWIDE_FORCE_FALLBACK=1`` to skip the extension.
"""

import os

if os.environ.get("OUTCOMEWIDE_FORCE_FALLBACK"):
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _resample as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "python"

linear_bootstrap_stats = _impl.linear_bootstrap_stats

__all__ = ["linear_bootstrap_stats", "BACKEND"]
