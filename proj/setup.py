"""CMake-driving build for the promptrr extension module.

The extension is produced by the repository's CMake project (target
promptrr_python); this shim points setuptools at it so plain
`pip install -e . --no-build-isolation` works without extra backends.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_dir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        out_dir.mkdir(parents=True, exist_ok=True)
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        source_dir = Path(__file__).parent.resolve()
        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                f"-DPython_EXECUTABLE={sys.executable}",
                "-DPROMPTRR_BUILD_PYTHON=ON",
                f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "promptrr_python",
             f"-j{os.cpu_count() or 2}"],
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("promptrr")],
    cmdclass={"build_ext": CMakeBuild},
    packages=[],
    py_modules=[],
)
