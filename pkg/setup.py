import os

from setuptools import Extension, setup

# The compiled kernel is optional: hmoe falls back to the pure-numpy
# implementation when the extension is absent. Set HMOE_SKIP_EXT=1 to
# force a pure-Python install.
ext_modules = []
if os.environ.get("HMOE_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "hmoe._kernels",
                    ["src/hmoe/_kernels.pyx"],
                    # -ffp-contract=off keeps the C arithmetic ulp-identical
                    # to the numpy backend (no FMA contraction), which the
                    # backend-equivalence tests rely on.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
