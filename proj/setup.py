"""CMake-driven build of the `iseat._core` extension.

The whole C++ project is configured and the `_core` pybind11 target is built
into the wheel. Use `pip install -e . --no-build-isolation` for development
installs.
"""

import glob
import os
import shutil
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
        source_dir = Path(__file__).parent.resolve()
        build_temp = Path(self.build_temp).resolve()
        build_temp.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DCMAKE_BUILD_TYPE=Release",
            "-DISEAT_BUILD_PYTHON=ON",
        ]
        if "CMAKE_ARGS" in os.environ:
            cmake_args += os.environ["CMAKE_ARGS"].split()

        subprocess.run(
            ["cmake", "-S", str(source_dir), "-B", str(build_temp)] + cmake_args,
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_temp), "--target", "_core", "-j"],
            check=True,
        )

        built = glob.glob(str(build_temp / "python" / "iseat" / "_core*"))
        if not built:
            raise RuntimeError("cmake did not produce the _core extension")
        dest = Path(self.get_ext_fullpath(ext.name)).resolve()
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], dest)


setup(
    packages=["iseat"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("iseat._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
