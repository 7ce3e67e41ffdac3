from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels must match the pure-Python fallback bit for bit:
# -ffp-contract=off stops fused multiply-adds, -fno-builtin stops GCC from
# pairing cos+sin into glibc sincos (which rounds differently than sin).
setup(
    ext_modules=cythonize(
        [
            Extension(
                "crashbench._kernels",
                ["src/crashbench/_kernels.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin"],
            )
        ],
        language_level=3,
    ),
)
