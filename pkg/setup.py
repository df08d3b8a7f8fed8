"""Build script: compiles the sampling kernel when a toolchain is available.

The package is fully functional without the extension (the numpy backend
is selected at import time); the kernel just makes large Monte Carlo
sweeps several times faster.
"""

import sys

from setuptools import setup

try:
    import os.path

    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    # the distribution functions (random_binomial etc.) live in numpy's
    # static helper library, which extensions must link explicitly
    npyrandom_dir = os.path.join(os.path.dirname(numpy.__file__), "random", "lib")

    ext_modules = cythonize(
        [
            Extension(
                "marketlab._sim_kernel",
                ["src/marketlab/_sim_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                library_dirs=[npyrandom_dir],
                libraries=["npyrandom"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # no Cython/numpy at build time: install pure
    print(f"marketlab: building without compiled kernel ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
