import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "repsched._core.kernel_c",
                ["src/repsched/_core/kernel_c.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python kernel is selected at import when the extension is missing.
    ext_modules = []

setup(ext_modules=ext_modules)
