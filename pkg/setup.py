"""Build shim for the optional compiled edge-kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the hot per-edge kernels
faster.  Build in place with:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "faithgat.backend._ckernels",
                ["src/faithgat/backend/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython/numpy in the build environment: install pure.
    ext_modules = []

setup(ext_modules=ext_modules)
