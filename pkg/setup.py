'''A setuptools based setup module.'''

from setuptools import find_packages, setup

from codecs import open
from os import path

import fampe.version

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='fampe',
    version=fampe.version.version,
    description='Frequency-aware attribution of image classifiers',
    long_description=long_description,
    long_description_content_type='text/markdown',
    license='MIT',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        ],
    keywords='attribution explainability saliency fourier',
    packages=find_packages(exclude=['tests', 'tests.*', 'docs', 'examples', 'examples.*']),
    python_requires='>=3.8',
    install_requires=['numpy >= 1.20', 'scipy >= 1.6', 'Pillow >= 8.0', 'tqdm >= 4.50'],
    extras_require={'tests': ['pytest >= 6.0']},
    package_data={'fampe': ['data/*.json', 'data/*.conf']},
    exclude_package_data={'': ['README.*']},
    entry_points={'console_scripts': ['fampe = fampe.cli.start_fampe:main']}
)
