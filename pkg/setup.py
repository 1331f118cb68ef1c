from setuptools import setup, find_packages

required_packages = ['numpy', 'pandas', 'easydict', 'networkx', 'scipy', 'pyvcd']


setup(name='pfdlab',
    version='1.0',
    description='Phase Frequency Detector Simulation Lab.',
    packages=find_packages(),
    install_requires=required_packages,
    include_package_data=True,
    zip_safe=False,
    tests_require=['pytest'],
    entry_points={
        'console_scripts':
            ['pfdlab=pfdlab.pfdlab:main']
    }
)
