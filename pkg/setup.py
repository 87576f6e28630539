from setuptools import setup, find_packages

setup(
    name="isolate",
    version="0.1",
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=[
        "networkx>=3.0",
        "numpy>=1.24",
        "pandas>=2.0",
        "scipy>=1.10",
    ],
)
