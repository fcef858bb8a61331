from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "gmsfem_wave.kernels._leapfrog",
        ["src/gmsfem_wave/kernels/_leapfrog.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
