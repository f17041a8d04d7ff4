#!/usr/bin/env python3
"""
Setup script for the Ring-Law Toolkit
Installs the ringlaw package and its `ringlaw` command
"""

import re
from pathlib import Path

from setuptools import find_packages, setup

HERE = Path(__file__).parent


def read_version():
    """Single source of truth is ringlaw/__init__.py"""
    text = (HERE / 'ringlaw' / '__init__.py').read_text(encoding='utf-8')
    return re.search(r"__version__ = '([^']+)'", text).group(1)


def read_requirements():
    """Runtime requirements only; the testing block stays in requirements.txt"""
    runtime = []
    for line in (HERE / 'requirements.txt').read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if line.startswith('# Testing'):
            break
        if line and not line.startswith('#'):
            runtime.append(line)
    return runtime


setup(
    name='ringlaw',
    version=read_version(),
    description='Spectral density of sub-unitary random matrices T = UH',
    long_description=(HERE / 'README.md').read_text(encoding='utf-8'),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['ringlaw.tests']),
    python_requires='>=3.8',
    install_requires=read_requirements(),
    extras_require={'test': ['pytest>=7.4', 'pytest-cov>=4.1', 'mpmath>=1.3']},
    entry_points={'console_scripts': ['ringlaw=ringlaw.app:main']},
)
