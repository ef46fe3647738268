import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# Compiled hot kernels. The package works without them (numpy fallbacks are
# selected at import time), so a failed build here only costs speed.
extensions = [
    Extension(
        "infill.kernels._ckernels",
        ["src/infill/kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fno-math-errno"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
