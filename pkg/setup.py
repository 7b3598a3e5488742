import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("P2PTRACK_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "p2ptrack._core",
        ["src/p2ptrack/_core.pyx"],
        include_dirs=[np.get_include()],
        # the pure-Python fallback must stay bit-identical: no FMA contraction, and
        # no sin+cos -> sincos fusion (glibc sincos differs in the last ulp)
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
