"""Quantum-classical AFQMC with computational-basis-tomography trial states."""

__version__ = "0.1.0"
