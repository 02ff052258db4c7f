"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

NATIVE_FLAG = "-march=native"


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:  # noqa: BLE001
            if NATIVE_FLAG not in ext.extra_compile_args:
                print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")
                return
        # retry for the generic target when the compiler rejects -march=native
        ext.extra_compile_args = [a for a in ext.extra_compile_args if a != NATIVE_FLAG]
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def extensions():
    if os.environ.get("RECURRCT_NO_EXT") == "1":
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    # no FMA contraction: every kernel must match the numpy fallback bit for bit.
    # Wider vectors are safe under that rule since each output keeps its own
    # summation order; RECURRCT_PORTABLE=1 builds for the generic target.
    flags = ["-O3", "-ffp-contract=off"]
    if os.environ.get("RECURRCT_PORTABLE") != "1":
        flags.append(NATIVE_FLAG)
    ext = Extension(
        "recurrct._ckernels",
        ["src/recurrct/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=flags,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
