"""Build script for the compiled measurement-grid kernel.

The package works without the extension (a numpy fallback is selected at
import time), but the compiled kernel is what `pip install` should produce
on any machine with a C compiler.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "qkdlab._gridscan",
        ["src/qkdlab/_gridscan.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
