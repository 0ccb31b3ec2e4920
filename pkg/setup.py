"""
A setuptools based setup module.
"""

from setuptools import find_packages, setup

description = "Classifying mixtures of Bayesian group factor analyzers with shared factors"

setup(
    name="gfamix",
    version="0.1.0",
    description=description,
    long_description=description,
    long_description_content_type="text/x-rst",
    license="MIT",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Information Analysis",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    keywords="factor analysis variational bayes mixture classification multi-view",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.9",
    install_requires=["numpy", "scipy", "scikit-learn", "pyyaml", "jinja2"],
    extras_require={
        "dev": [
            "pytest",
            "flake8",
            "check-manifest",
        ]
    },
    include_package_data=True,
    package_data={"gfamix": ["data/*.svg.j2"]},
    entry_points={
        "console_scripts": [
            "gfamix = gfamix.main:cli_main",
        ]
    },
)
