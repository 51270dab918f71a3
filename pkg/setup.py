"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (numpy reference
kernels are selected at import time); building it just makes training
faster.  `pip install -e . --no-build-isolation` compiles it in place.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "quakecast.kernels._native",
                sources=["src/quakecast/kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
