import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the pure-python fallback must reproduce kernel results
# bit-for-bit, so FMA contraction is disabled.
ext = Extension(
    "pinlab.kernels._core",
    ["src/pinlab/kernels/_core.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize([ext], language_level=3),
)
