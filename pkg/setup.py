import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy fallback is used at runtime
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("QSDLAB_NO_EXT") != "1":
    rand_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
    ext_modules = cythonize(
        [
            Extension(
                "qsdlab.sde._kernels",
                ["src/qsdlab/sde/_kernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[rand_lib],
                libraries=["npyrandom"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
