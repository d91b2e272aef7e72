"""Build script for the optional compiled LAP kernel.

The package works without the extension; ``foolkit.kernels`` falls back to
the pure-Python sweep when the compiled module cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("FOOLKIT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "foolkit._lap_kernel",
                    ["src/foolkit/_lap_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    # no fast-math / contraction: results must match the
                    # pure-Python sweep bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
