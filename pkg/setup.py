"""Build the optional Cython kernels.

Without Cython (or a C compiler) the package installs pure-Python and the
kernels fall back at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("COORDGUARD_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "coordguard.kernels._ckernels",
                    ["src/coordguard/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # strict IEEE rounding: results must match the Python fallback bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
