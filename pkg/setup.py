from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    # numpy fallback kernels are used when the extension is absent
    ext_modules = []
else:
    ext_modules = cythonize(
        "src/ordinal_causal/copula/_ckernels.pyx",
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())

setup(ext_modules=ext_modules)
