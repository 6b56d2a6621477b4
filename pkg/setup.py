# -*- encoding: utf-8 -*-
from setuptools import setup, find_packages

with open('README.rst', 'r', encoding='utf-8') as fh:
    long_description = fh.read()


def get_version(package_path):
    import os
    from importlib.util import module_from_spec, spec_from_file_location
    spec = spec_from_file_location('version', os.path.join('src', package_path, '_version.py'))
    module = module_from_spec(spec)
    spec.loader.exec_module(module)
    return module.__version__


version = get_version('magrec')

setup(
    name='magrec',
    version=version,
    description='Total variation regularized reconstruction of magnetizations from planar field data',
    long_description=long_description,
    long_description_content_type='text/x-rst',
    classifiers="""Development Status :: 3 - Alpha
Environment :: Console
Intended Audience :: Science/Research
License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)
Operating System :: POSIX
Programming Language :: Python :: 3.6
Programming Language :: Python :: 3.7
Programming Language :: Python :: 3.8
Programming Language :: Python :: 3.9
Topic :: Scientific/Engineering :: Physics
"""[:-1].split('\n'),
    keywords='magnetization inverse-problem total-variation fista',
    license='LGPL-3',
    packages=find_packages('src', exclude=['*.tests', '*.tests.*']),
    package_dir={
        '': 'src',
    },
    package_data={
        'magrec': ['schemas/*/*.yaml', 'presets/*.yaml'],
    },
    zip_safe=False,  # Schemas and presets are read from the file system.
    install_requires=[
        'PrettyTable>=0.7.2,<1',
        'setproctitle>=1.1.8,<2',
        'python-dateutil>=2.6.0,<3',
        'ruamel.yaml>0.15',
        'argcomplete>=1.9.4,<2',
        'cerberus>=1.2,<2',
        'pycryptodome>=3.6.1,<4',
        'semantic_version>=2.8.1,<3',
        'structlog>=19.1.0',
        'colorama>=0.4.1,<1',
        'attrs >=21.4.0,<22',
        'numpy>=1.17,<2',
        'scipy>=1.3,<2',
    ],
    extras_require={
        'dev': ['parameterized', 'wheel', 'yapf', 'mypy', 'pytest', 'build', 'cvxpy'],
        'doc': ['sphinx', 'sphinx_rtd_theme', 'sphinxcontrib-programoutput'],
    },
    python_requires='~=3.6',
    entry_points="""
        [console_scripts]
            magrec = magrec.scripts.magrec:main
    """,
)
