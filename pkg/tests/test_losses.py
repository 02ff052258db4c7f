import math

import numpy as np
import pytest

from oracles import ssim_plain
from recurrct.errors import ValidationError
from recurrct.nn import losses


def checkerboard(n=16):
    return (np.indices((n, n)).sum(axis=0) % 2).astype(np.float64)


def test_gaussian_taps():
    t = losses.gaussian_taps()
    assert t.size == 11 and math.isclose(t.sum(), 1.0, abs_tol=1e-15)
    assert np.array_equal(t, t[::-1]) and t.argmax() == 5


def test_self_similarity(rng):
    for _ in range(10):
        x = rng.random((int(rng.integers(11, 30)), 20))
        assert abs(losses.mssim(x, x) - 1.0) <= 1e-12


def test_checkerboard_anticorrelated():
    x = checkerboard()
    assert losses.mssim(x, 1.0 - x) < 0.0


def test_symmetry(rng):
    for _ in range(10):
        x, y = rng.random((2, 15, 17))
        assert abs(losses.mssim(x, y) - losses.mssim(y, x)) <= 1e-12


def test_matches_explicit_windows(rng):
    for _ in range(5):
        x, y = rng.random((2, 14, 13))
        assert losses.mssim(x, y) == pytest.approx(ssim_plain(x, y), abs=1e-12)


def test_at_most_one(rng):
    for _ in range(20):
        x, y = rng.random((2, 12, 12))
        assert losses.mssim(x, y) < 1.0


def test_channel_stack(rng):
    x, y = rng.random((2, 3, 12, 12))
    per = losses.channel_mssim(x, y)
    assert per.shape == (3,)
    assert per[1] == losses.mssim(x[1], y[1])
    assert losses.mssim(x[:1], y[:1]) == losses.mssim(x[0], y[0])


def test_window_too_large():
    with pytest.raises(ValidationError, match="at least 11"):
        losses.mssim(np.zeros((10, 12)), np.zeros((10, 12)))
    with pytest.raises(ValidationError, match="mismatch"):
        losses.mssim(np.zeros((12, 12)), np.zeros((13, 12)))


def test_ae_loss_zero_on_perfect_reconstruction(rng):
    x = rng.random((3, 14, 14))
    assert losses.ae_loss(x, x) == 0.0


def test_ae_loss_constant_images():
    # decisions ledger: the luminance term keeps MSSIM below 1 for flat images
    x, y = np.full((1, 16, 16), 0.5), np.full((1, 16, 16), 0.6)
    expected = 0.1 + (1.0 - (2 * 0.5 * 0.6 + losses.C1) / (0.25 + 0.36 + losses.C1))
    assert losses.ae_loss(x, y) == pytest.approx(expected, abs=1e-12)
    assert losses.ae_loss(x, y) == pytest.approx(0.116391, abs=1e-6)


def test_ae_loss_nonnegative(rng):
    for _ in range(100):
        x, y = rng.random((2, 2, 12, 12))
        assert losses.ae_loss(x, y) >= 0.0


def test_ae_loss_batch_is_mean_of_samples(rng):
    x, y = rng.random((2, 4, 2, 12, 12))
    per = [losses.ae_loss(x[i], y[i]) for i in range(4)]
    assert losses.ae_loss(x, y) == pytest.approx(np.mean(per), abs=1e-12)
    value, _ = losses.ae_loss_grad(x, y)
    assert value == pytest.approx(losses.ae_loss(x, y), abs=1e-12)


def test_cross_entropy_values():
    assert losses.cross_entropy(np.array([0.0, 0.0]), 0) == pytest.approx(math.log(2), abs=1e-15)
    assert losses.cross_entropy(np.array([0.0, 0.0]), 1) == pytest.approx(math.log(2), abs=1e-15)
    assert losses.cross_entropy(np.array([10.0, -10.0]), 0) == pytest.approx(2.06e-9, rel=1e-2)
    assert losses.cross_entropy(np.array([1000.0, -1000.0]), 1) == pytest.approx(2000.0)


def test_cross_entropy_bad_label():
    with pytest.raises(ValidationError):
        losses.cross_entropy(np.zeros(2), 2)
    with pytest.raises(ValidationError):
        losses.cross_entropy(np.zeros(2), 0.5)


def test_softmax_rows_sum_to_one(rng):
    p = losses.softmax(rng.normal(size=(5, 2)) * 50)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-15)
