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
        out_dir = Path(self.get_ext_fullpath(ext.name)).parent.resolve() / "dynpet"
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        import pybind11

        cmake_args = [
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
            f"-DPYTHON_EXECUTABLE={sys.executable}",
            f"-Dpybind11_DIR={pybind11.get_cmake_dir()}",
            "-DCMAKE_BUILD_TYPE=Release",
            "-DDYNPET_BUILD_TESTS=OFF",
            "-DDYNPET_BUILD_CLI=OFF",
            "-DDYNPET_INSTALL_PYTHON=ON",
        ]
        src = Path(__file__).parent.resolve()
        subprocess.run(["cmake", str(src), *cmake_args], cwd=build_dir, check=True)
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_dynpet", "-j", str(os.cpu_count() or 2)],
            cwd=build_dir,
            check=True,
        )
        built = list(build_dir.rglob("_dynpet*.so")) + list(out_dir.glob("_dynpet*.so"))
        if not built:
            raise RuntimeError("CMake build produced no _dynpet extension")
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / built[0].name
        if built[0].resolve() != target.resolve():
            target.write_bytes(built[0].read_bytes())


setup(
    ext_modules=[CMakeExtension("dynpet._dynpet")],
    cmdclass={"build_ext": CMakeBuild},
)
