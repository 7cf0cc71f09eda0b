from setuptools import setup

setup(
    name = 'pyfwi',
    version = '0.1.0',
    description = 'A Python research toolbox for full waveform inversion with quadratic Wasserstein misfits',
    long_description = 'pyfwi is a Python research toolbox for 2D acoustic full waveform inversion\nwith optimal transport misfits.\n\nSee README.rst for usage.',

    classifiers=[
        'Programming Language :: Python :: 3',
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Physics',
    ],
    packages = ['pyfwi'],
    python_requires = '>=3.7',

    install_requires = [
        'numpy>=1.17',
        'scipy>=1.6',
        'scikit-fmm',
    ],
    extras_require = {
        'plot': ['matplotlib'],
        'test': ['pytest'],
    },
    entry_points = {
        'console_scripts': ['pyfwi = pyfwi.cli:main'],
    },
)
