import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("XRFDENOISE_NO_EXT"):
    ext = Extension(
        "xrfdenoise._core",
        ["src/xrfdenoise/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O2", "-fopenmp", "-ffp-contract=off"],
        extra_link_args=["-fopenmp"],
    )
    ext_modules = cythonize(
        [ext],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )

setup(ext_modules=ext_modules)
