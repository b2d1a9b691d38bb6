import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback still works without the compiled core
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("KL_NO_EXT"):
    ext_modules = cythonize(
        Extension(
            "kllab._panels",
            ["src/kllab/_panels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        ),
        language_level=3,
    )

setup(ext_modules=ext_modules)
