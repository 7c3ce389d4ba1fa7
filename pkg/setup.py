"""A setuptools based setup module."""

from setuptools import setup, find_packages
from codecs import open
from os import path


here = path.abspath(path.dirname(__file__))

# Get the long description from the README file.
with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='dgflow',
    version='0.1.0',
    description='Matrix-free DG incompressible Navier-Stokes solver',
    long_description=long_description,
    keywords='cfd navier-stokes discontinuous-galerkin tr-bdf2 matrix-free',
    packages=find_packages(exclude=['contrib', 'docs', 'tests']),
    install_requires=[
        'jsonschema>=3.2.0',
        'meshio>=5.0.0',
        'numpy>=1.22.0',
        'pyee>=8.1.0',
        'scipy>=1.12.0',
    ],
    extras_require={
        'test': ['pytest>=7.0.0'],
    },
    entry_points={
        'console_scripts': [
            'dgflow = dgflow.cli:main',
        ],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Mozilla Public License 2.0 (MPL 2.0)',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Physics',
    ],
    license='MPL-2.0',
    python_requires='>=3.9, <4',
)
