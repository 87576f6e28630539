from setuptools import setup, find_packages

setup(
    name="isolate",
    packages=find_packages(),
    version="0.1",
)
