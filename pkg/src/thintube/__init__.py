"""Spectral studies of thin curved and twisted quantum waveguides.

Submodules are imported on demand; importing the package itself stays cheap
so the command line can configure BLAS threads before numpy loads.
"""
__version__ = "0.1.0"
