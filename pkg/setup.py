#!/usr/bin/env python3
"""
Setup script for the mgamsgd package.
"""
from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [
        line.split("#")[0].strip() for line in fh.read().splitlines()
        if line.split("#")[0].strip()
    ]

setup(
    name="mgamsgd",
    version="0.1.0",
    description="Mesh-free 3D linear elastostatics with neural networks trained by hybrid MGA-MSGD",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    py_modules=["main", "run_cli"],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "mgamsgd=main:cli",
            "mgamsgd-cli=run_cli:main",
        ],
    },
    include_package_data=True,
)
