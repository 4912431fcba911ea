"""Build the optional Cython kernels; the package still works without them."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("MMSHARE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("mmshare._kernels", ["src/mmshare/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
