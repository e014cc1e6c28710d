import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

np_random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "collab_topm._kernels",
        ["src/collab_topm/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[np_random_lib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
