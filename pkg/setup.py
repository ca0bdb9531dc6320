"""Build script: compiles the event-loop kernel when Cython is available.

The package works without the extension (a pure-Python kernel is selected at
import time), so any failure here downgrades to a warning instead of aborting
the install.
"""
import warnings

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "apq._simcore",
                ["src/apq/_simcore.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    warnings.warn(f"building without compiled simulation kernel: {exc}")

setup(ext_modules=ext_modules)
