"""Kernel backend selection.

The compiled extension is used when importable; set ``RECURRCT_PURE_PYTHON=1``
to force the numpy fallback. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

if os.environ.get("RECURRCT_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

nn_maxnorm = _impl.nn_maxnorm
line_histograms = _impl.line_histograms
bilinear_resize = _impl.bilinear_resize
im2col = _impl.im2col
col2im = _impl.col2im
sep_filter = _impl.sep_filter
sep_filter_adjoint = _impl.sep_filter_adjoint
ssim_terms = _impl.ssim_terms
