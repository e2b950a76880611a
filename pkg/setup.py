#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""The setup script"""

import os
from setuptools import setup, find_packages

# Get the long description from the README file
with open(os.path.join(os.path.abspath(os.path.dirname(__file__)), 'README.md')) as f:
    long_description = f.read()

setup(author="Dih5",
      author_email='dihedralfive@gmail.com',
      classifiers=[
          'Development Status :: 3 - Alpha',
          'Intended Audience :: Science/Research',
          'Natural Language :: English',
          'Programming Language :: Python :: 3',
          'Programming Language :: Python :: 3.8',
          'Programming Language :: Python :: 3.9',
          'Programming Language :: Python :: 3.10',
          'Topic :: Scientific/Engineering :: Mathematics',
      ],
      description='Numerical laboratory for the Reflect-Reflect-Relax iteration and its flow limit',
      entry_points={
          'console_scripts': [
              'rrrflow=rrrflow.cli:main',
          ],
      },
      extras_require={
          "docs": ["sphinx", "sphinx-rtd-theme"],
          "test": ["pytest"],
      },
      keywords=["feasibility", "projection methods", "douglas-rachford", "filippov"],
      long_description=long_description,
      long_description_content_type='text/markdown',
      name='rrrflow',
      packages=find_packages(include=['rrrflow'], exclude=["demos", "tests", "docs"]),
      package_data={'rrrflow': ['data/golden/*.json']},
      install_requires=["numpy", "scipy", "pandas>=1.5", "networkx"],
      url='https://github.com/dih5/rrrflow',
      version='0.1.0',

      )
