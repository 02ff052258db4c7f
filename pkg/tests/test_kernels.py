"""The compiled and numpy kernel backends must agree bit for bit."""
import numpy as np
import pytest

from recurrct import _pykernels, kernels
from recurrct.nn.losses import C1, C2, gaussian_taps

ck = pytest.importorskip("recurrct._ckernels", reason="compiled extension not built")

CONV_CASES = [
    # (C, B, H, W, k, s, p)
    (1, 3, 14, 14, 3, 1, 1),
    (3, 2, 12, 12, 3, 1, 0),
    (2, 4, 16, 16, 2, 2, 0),
    (2, 2, 9, 11, 3, 2, 1),
    (4, 1, 8, 8, 4, 4, 0),
    (1, 2, 7, 7, 5, 1, 2),
]


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")


def test_nn_maxnorm(rng):
    for shape in ((50, 3), (300, 5), (2, 1)):
        pts = rng.normal(size=shape)
        a, b = _pykernels.nn_maxnorm(pts), ck.nn_maxnorm(pts)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    pts = np.repeat(rng.normal(size=(5, 2)), 3, axis=0)
    a, b = _pykernels.nn_maxnorm(pts), ck.nn_maxnorm(pts)
    assert np.array_equal(a[0], b[0])


def test_line_histograms(rng):
    for k in (1, 2, 17, 64):
        r = (rng.random((k, k)) < 0.5).astype(np.uint8)
        a, b = _pykernels.line_histograms(r), ck.line_histograms(r)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_bilinear(rng):
    for k, t in ((2, 3), (10, 10), (33, 224), (224, 50)):
        img = rng.random((k, k))
        assert np.array_equal(_pykernels.bilinear_resize(img, t), ck.bilinear_resize(img, t))


@pytest.mark.parametrize("case", CONV_CASES)
def test_im2col_col2im(rng, case):
    c, b, h, w, k, s, p = case
    ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
    x = rng.normal(size=(c, b, h, w))
    a = _pykernels.im2col(x, k, s, p, ho, wo)
    assert np.array_equal(a, ck.im2col(x, k, s, p, ho, wo))
    cols = rng.normal(size=a.shape)
    back = _pykernels.col2im(cols, (c, b, h, w), k, s, p, ho, wo)
    assert np.array_equal(back, ck.col2im(cols, (c, b, h, w), k, s, p, ho, wo))
    # adjoint identity
    assert np.isclose(np.vdot(a, cols), np.vdot(x, back), rtol=1e-12)


def test_im2col_non_contiguous_input(rng):
    x = rng.normal(size=(3, 2, 10, 10)).transpose(1, 0, 2, 3)
    assert np.array_equal(_pykernels.im2col(x, 3, 1, 1, 10, 10), ck.im2col(x, 3, 1, 1, 10, 10))


def test_separable_filter(rng):
    taps = gaussian_taps()
    a = rng.random((2, 3, 30, 25))
    assert np.array_equal(_pykernels.sep_filter(a, taps), ck.sep_filter(a, taps))
    m = rng.normal(size=(2, 20, 15))
    assert np.array_equal(_pykernels.sep_filter_adjoint(m, taps), ck.sep_filter_adjoint(m, taps))


def test_ssim_terms(rng):
    taps = gaussian_taps()
    x, y = rng.random((3, 28, 28)), rng.random((3, 28, 28))
    sa, ga = _pykernels.ssim_terms(x, y, taps, C1, C2, True)
    sb, gb = ck.ssim_terms(x, y, taps, C1, C2, True)
    assert np.array_equal(sa, sb) and np.array_equal(ga, gb)
    assert np.array_equal(_pykernels.ssim_terms(x, y, taps, C1, C2, False)[0],
                          ck.ssim_terms(x, y, taps, C1, C2, False)[0])
