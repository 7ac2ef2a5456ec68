"""Build script: compiles the optional rasterizer extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes depth rendering much faster.
"""

import numpy as np
from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "lucidlab._kernels._rasterize",
                ["src/lucidlab/_kernels/_rasterize.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
