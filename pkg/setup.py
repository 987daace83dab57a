from setuptools import find_packages, setup


with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="nvcycle",
    version="0.1.0",
    description="Phonon-assisted charge cycling of NV centres: rate models, blinking simulation and fitting",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["main"],
    install_requires=[
        "pydantic~=2.10.6",
        "loguru~=0.7.3",
        "numpy",
        "scipy>=1.11",
        "pandas>=2.0",
        "lmfit>=1.2",
    ],
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.12",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.12",
    entry_points={
        "console_scripts": [
            "nvcycle=main:main",
        ],
    },
)
