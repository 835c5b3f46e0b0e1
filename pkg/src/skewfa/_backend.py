"""Select the compiled kernels when available, else the numpy fallback.

Set ``SKEWFA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("SKEWFA_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

bvn_cdf = kernels.bvn_cdf
tvn_cdf = kernels.tvn_cdf
phi_grid = kernels.phi_grid
mixture_sums = kernels.mixture_sums
