"""Build script: compiles the optional Cython kernel extension.

The extension is a pure speedup; if the toolchain is unavailable the
package installs anyway and shrubmap._kernels falls back to numpy
implementations at import time.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Skip the extension (with a warning) instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or cythonize failure
            print(f"warning: native kernel build skipped ({exc}); "
                  "pure-numpy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "pure-numpy fallback will be used")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "shrubmap._kernels._native",
                ["src/shrubmap/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
