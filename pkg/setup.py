import os

from setuptools import Extension, setup

ext_modules = []
if os.path.exists(os.path.join("src", "sensebid", "_fastpath.pyx")):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "sensebid._fastpath",
                    ["src/sensebid/_fastpath.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython available: install the pure-Python package; the kernel
        # dispatcher falls back to the numpy implementation at import time.
        ext_modules = []

setup(ext_modules=ext_modules)
