#!/usr/bin/env python
# -*- coding: utf-8 -*-

try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup


DESCRIPTION = ('Numerical library for the l^p-constrained Curie-Weiss model: '
               'critical temperatures, limiting free energies, sphere '
               'samplers and brute-force oracles')

DISTNAME = 'lpcw'
LICENSE = 'MIT'
AUTHORS = 'The lpcw developers'
URL = ''
DOWNLOAD_URL = ''
CLASSIFIERS = [
    'Development Status :: 3 - Alpha',
    'Environment :: Console',
    'Intended Audience :: Science/Research',
    'Programming Language :: Python',
    'Programming Language :: Python :: 3',
    'Topic :: Scientific/Engineering :: Mathematics',
    'Topic :: Scientific/Engineering :: Physics',
]

with open('requirements.txt') as f:
    INSTALL_REQUIRES = [line.strip() for line in f if line.strip()]


setup(
    name=DISTNAME,
    version='0.1.0',
    maintainer=AUTHORS,
    packages=['lpcw', 'lpcw.tests'],
    install_requires=INSTALL_REQUIRES,
    extras_require={'test': ['pytest', 'mpmath']},
    entry_points={'console_scripts': ['lpcw = lpcw.cli:main']},
    python_requires='>=3.8',
    description=DESCRIPTION,
    license=LICENSE,
    url=URL,
    download_url=DOWNLOAD_URL,
    long_description=DESCRIPTION,
    classifiers=CLASSIFIERS
)
