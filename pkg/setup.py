"""Build script for the optional compiled arithmetic core.

The package is fully functional without the extension (a pure-Python core is
selected at import time), but proving and pairing operations are orders of
magnitude faster with it. Build failures therefore degrade to a warning
instead of aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or Cython missing
            print(f"warning: compiled core skipped ({exc}); "
                  "falling back to the pure-Python core", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to the pure-Python core", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; compiled core skipped",
              file=sys.stderr)
        return []
    ext = Extension(
        "veilkey.backends._speedcore",
        ["src/veilkey/backends/_speedcore.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
