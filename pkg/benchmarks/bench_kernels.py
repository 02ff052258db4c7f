"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on inputs shaped like the pipeline's hot paths (224x224
plots, autoencoder layers on a batch of 16, Cao neighbour search on a
200-sample series). The table reports the best of N runs for each backend,
the speed-up, and whether the two outputs are bit-identical.
"""
import argparse
import timeit

import numpy as np

from recurrct import _pykernels
from recurrct.nn.losses import C1, C2, gaussian_taps

try:
    from recurrct import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    taps = gaussian_taps()
    x16 = rng.random((2, 16, 224, 224))
    cols = _pykernels.im2col(x16, 3, 2, 1, 112, 112)
    up = rng.random((32, 16, 56, 56))
    up_cols = rng.normal(size=(2 * 2 * 2, 16 * 112 * 112))
    binary = (rng.random((190, 190)) < 0.1).astype(np.uint8)
    pts = rng.normal(size=(190, 6))
    y = rng.random((16, 2, 224, 224))
    yr = np.clip(y + 0.1 * rng.normal(size=y.shape), 0, 1)
    return {
        "nn_maxnorm 190x6": ("nn_maxnorm", (pts,)),
        "line_histograms 190": ("line_histograms", (binary,)),
        "bilinear 190->224": ("bilinear_resize", (rng.random((190, 190)), 224)),
        "im2col 2x16x224 k3 s2": ("im2col", (x16, 3, 2, 1, 112, 112)),
        "col2im 2x16x224 k3 s2": ("col2im", (cols, (2, 16, 224, 224), 3, 2, 1, 112, 112)),
        "im2col 32x16x56 k2 s2": ("im2col", (up, 2, 2, 0, 28, 28)),
        "col2im 2x16x224 k2 s2": ("col2im", (up_cols, (2, 16, 224, 224), 2, 2, 0, 112, 112)),
        "sep_filter 32x224": ("sep_filter", (y.reshape(32, 224, 224), taps)),
        "ssim_terms+grad 32x224": ("ssim_terms", (y.reshape(32, 224, 224), yr.reshape(32, 224, 224), taps, C1, C2, True)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(p, q) for p, q in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python ms':>11}{'compiled ms':>13}{'speed-up':>10}  identical")
    for label, (name, arg) in cases(rng).items():
        py = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py(*arg), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{label:<26}{t_py:>11.2f}{'-':>13}{'-':>10}  -")
            continue
        c = getattr(_ckernels, name)
        t_c = min(timeit.repeat(lambda: c(*arg), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<26}{t_py:>11.2f}{t_c:>13.2f}{t_py / t_c:>9.1f}x  {same(py(*arg), c(*arg))}")


if __name__ == "__main__":
    main()
