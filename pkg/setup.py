#!/usr/bin/env python

from setuptools import setup


# Modified from http://stackoverflow.com/questions/2058802/
# how-can-i-get-the-version-defined-in-setup-py-setuptools-in-my-package
def version():
    import os
    import re

    init = os.path.join('simpc', '__init__.py')
    with open(init) as fp:
        initData = fp.read()
    match = re.search(r"^__version__ = ['\"]([^'\"]+)['\"]",
                      initData, re.M)
    if match:
        return match.group(1)
    else:
        raise RuntimeError('Unable to find version string in %r.' % init)


setup(name='simpc',
      version=version(),
      packages=['simpc'],
      keywords=['point clouds', 'denoising', 'unsupervised learning'],
      classifiers=[
          'Programming Language :: Python :: 3.6',
          'Programming Language :: Python :: 3.7',
          'Programming Language :: Python :: 3.8',
          'Development Status :: 4 - Beta',
          'Intended Audience :: Science/Research',
          'License :: OSI Approved :: MIT License',
          'Operating System :: OS Independent',
          'Topic :: Scientific/Engineering',
      ],
      description=('Command line scripts and Python classes for unsupervised '
                   'point cloud denoising with mirror-point consistency.'),
      long_description='See README.md for details.',
      license='MIT',
      python_requires='>=3.6',
      scripts=[
          'bin/add-noise.py',
          'bin/make-shape.py',
          'bin/simpc.py',
      ],
      install_requires=[
          'numpy>=1.17.0',
          'scipy>=1.4.0',
          'plotly>=4.0.0',
          'six>=1.11.0',
          'flake8>=3.5.0',
      ],
      extras_require={
          'test': ['hypothesis>=4.0.0', 'pytest'],
      })
