from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "albench._mlp",
                ["src/albench/_mlp.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # reassociation lets gcc vectorize the dot-product reductions;
                # finite-math stays OFF so the NaN divergence check keeps working
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-fassociative-math",
                    "-fno-signed-zeros",
                    "-fno-trapping-math",
                    "-fno-math-errno",
                ],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python install still works; albench falls back to the numpy kernel.
    ext_modules = []

setup(ext_modules=ext_modules)
