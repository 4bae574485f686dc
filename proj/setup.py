import glob
import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

here = os.path.dirname(os.path.abspath(__file__))

eigen_include = os.environ.get("EIGEN_INCLUDE", "/usr/include/eigen3")

ext = Pybind11Extension(
    "linesgd._core",
    sources=["python/bindings.cpp"] + sorted(glob.glob("src/*.cpp")),
    include_dirs=[os.path.join(here, "include"), eigen_include],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
