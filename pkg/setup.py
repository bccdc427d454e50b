"""Build script: compiles the optional CSR aggregation extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed Cython build degrades gracefully instead of
blocking installation.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/botgnn/kernels/_csr.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("warning: Cython unavailable, building pure-Python botgnn (numpy kernel fallback)")

setup(ext_modules=ext_modules)
