"""Build script: compiles the retrieval kernel extension when Cython is present.

The package is fully functional without the extension (a pure-numpy fallback
is selected at import time), so a failed compile is not fatal to installs.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "tsarag.kernels._native",
                ["src/tsarag/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
