"""Build script for the optional compiled kernels.

The package is fully functional without the extension; ``badfusion.kernels``
falls back to the pure-Python implementations when the compiled module is
missing or when BADFUSION_KERNELS=python is set.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/badfusion/kernels/_fast.pyx"],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
