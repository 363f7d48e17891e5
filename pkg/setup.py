import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.environ.get("READOUTBENCH_NO_EXT") != "1":
    extensions = cythonize(
        [
            Extension(
                "readoutbench._kernels",
                ["src/readoutbench/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
