import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back to _pycore
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("GIBBSMPLE_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "gibbsmple._core",
                ["src/gibbsmple/_core.pyx"],
                include_dirs=[np.get_include()],
                # no contraction: distance ties must compare equal to the Python path
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
