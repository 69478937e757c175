"""Build the optional Cython kernels.

CMD: pip install -e . --no-build-isolation
If Cython or a compiler is missing the package still installs and the
numpy fallback kernels are used.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "memefuse.kernels._ckernels",
                ["src/memefuse/kernels/_ckernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
