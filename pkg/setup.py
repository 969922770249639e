"""Build script for the optional compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a missing Cython or C compiler only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "tslab.denoiser._convcore",
                ["src/tslab/denoiser/_convcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -fassociative-math (plus its prerequisites) lets the
                # compiler vectorize the gradient reductions without the
                # -ffinite-math-only part of -ffast-math, so NaN and Inf
                # still propagate out of diverging training runs.
                # -march=native is safe because the extension is always
                # compiled on the machine that runs it.
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-fassociative-math",
                    "-fno-signed-zeros",
                    "-fno-trapping-math",
                    "-ffp-contract=fast",
                ],
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
