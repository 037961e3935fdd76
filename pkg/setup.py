"""Build script for the optional compiled solver core.

The package works without the extension: mvreg.core falls back to a numpy
implementation at import time.  The extension is therefore marked optional
so a missing compiler does not block installation.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-python install environment
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "mvreg.core._kernels",
                ["src/mvreg/core/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )

setup(ext_modules=ext_modules)
