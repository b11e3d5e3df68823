"""Build the optional compiled sweep kernels; the package falls back to NumPy without them."""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "natgrad.solver._ckernels",
                ["src/natgrad/solver/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math and no FMA contraction: results must match the NumPy path bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
