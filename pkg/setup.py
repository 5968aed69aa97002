import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled core is optional: if the build fails the package falls back
# to the pure-numpy kernels at import time.
extensions = [
    Extension(
        name="meshavatar._core",
        sources=["src/meshavatar/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
