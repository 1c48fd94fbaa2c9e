"""Build script: compiles the optional top-k kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/lemon/_kernel.pyx",
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
except Exception as exc:  # pragma: no cover - build environment dependent
    import sys

    print(f"skipping compiled kernel ({exc!r}); using pure-Python fallback", file=sys.stderr)

setup(ext_modules=ext_modules)
