"""Setup script for contraction-tuner."""

from pathlib import Path

from setuptools import find_packages, setup

this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text()

requirements = []
requirements_file = this_directory / "requirements.txt"
if requirements_file.exists():
    lines = requirements_file.read_text().strip().split("\n")
    requirements = [req.strip() for req in lines if req.strip() and not req.startswith("#")]

setup(
    name="contraction-tuner",
    version="0.1.0",
    description="Loop-nest autotuning for CPU tensor contractions",
    long_description=long_description,
    long_description_content_type="text/markdown",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    package_data={"contraction_tuner": ["py.typed"]},
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-cov>=4.0.0",
            "black>=23.0.0",
            "isort>=5.12.0",
            "mypy>=1.0.0",
            "flake8>=6.0.0",
        ]
    },
    entry_points={
        "console_scripts": [
            "contraction-tuner=contraction_tuner.cli:main",
        ]
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Developers",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Programming Language :: Python :: 3",
        "Topic :: Software Development :: Compilers",
    ],
    keywords="autotuning loop-nest tensor-contraction scheduling reinforcement-learning",
)
