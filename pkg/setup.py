import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; bandcast falls back to numpy kernels
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("BANDCAST_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "bandcast._kernels",
                ["src/bandcast/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
