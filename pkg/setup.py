import sys

from setuptools import Extension, setup

# The compiled stepper is an optimization, not a requirement: the package
# falls back to the numpy implementation when the extension is absent.
ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "chaoskit._stepper",
                ["src/chaoskit/_stepper.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover
    sys.stderr.write(f"chaoskit: skipping compiled stepper ({exc})\n")

setup(ext_modules=ext_modules)
