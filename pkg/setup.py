import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SANDTREE_PURE") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sandtree._kernels",
                ["src/sandtree/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
