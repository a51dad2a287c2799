"""Hybridized DG discretization of the Stokes equations with static
condensation, block preconditioners and spectral verification probes."""

from . import mesh, spaces, assembly, condense, precond, krylov, spectra

__all__ = ["mesh", "spaces", "assembly", "condense", "precond",
           "krylov", "spectra"]
__version__ = "0.1.0"
