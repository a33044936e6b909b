#!/usr/bin/env python3

from setuptools import setup, find_packages

version = '0.1.0'


with open("README.md", "r") as f:
    long_description = f.read()

setup(
    name='noncoherentmimo',
    version=version,
    license='GNU General Public License v3.0',

    description='Jointly learned constellations and soft-output decoders for the non-coherent MIMO channel',
    long_description=long_description,
    long_description_content_type="text/markdown",

    python_requires='>=3.8',
    install_requires=['numpy', 'scipy', 'cloudpickle', 'tqdm'],
    extras_require={'test': ['pytest', 'hypothesis']},
    packages=find_packages('.', include=['noncoherentmimo', 'noncoherentmimo.*']),
    entry_points={'console_scripts': ['noncoherentmimo=noncoherentmimo.cli:main']},

    classifiers=[
        "Programming Language :: Python :: 3",
    ],
 )
