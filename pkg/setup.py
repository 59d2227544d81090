"""Build script for the compiled extension core.

The package works without the extension (a pure-numpy twin is selected at
import time); building it is strongly recommended for the batch Monte Carlo
studies.  -ffp-contract=off keeps the C arithmetic bit-identical to the
numpy fallback (no FMA contraction).
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "coulomb_lab._core",
                ["src/coulomb_lab/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
