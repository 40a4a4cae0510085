"""Build script: compiles the optional Cython kernel, falls back silently."""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing etc.
            print(f"warning: Cython kernel not built ({exc}); pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); pure-Python fallback will be used")


def extensions():
    if os.environ.get("VPASS_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    exts = [Extension("vpass._kernels", ["src/vpass/_kernels.pyx"], extra_compile_args=["-O3"])]
    return cythonize(
        exts,
        compiler_directives=dict(language_level="3", boundscheck=False, wraparound=False, cdivision=True),
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
