import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "wldreg._kernels",
        ["src/wldreg/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # No FMA contraction: matmul must match a plain triple loop bit for bit.
        # -fopenmp-simd only honours the simd pragmas; no OpenMP runtime.
        extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp-simd"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
