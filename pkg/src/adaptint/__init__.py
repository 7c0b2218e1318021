"""Adaptive integration of binary learning agents.

Submodules
----------
lattice
    Geometries, couplings and quenched strength disorder.
dynamics
    Synchronous automaton, mean-field rule, noise and trajectories.
field
    Continuum field equation, explicit Euler flow and its Lyapunov functional.
analysis
    Stationary profiles, boundary layers, clusters, order parameter.
integrate
    Consensus front end for external binary predictions.
cli
    Config-driven experiment runner.
"""
from adaptint._backend import get_backend, set_backend, use_backend

__version__ = "0.1.0"

__all__ = ["get_backend", "set_backend", "use_backend", "__version__"]
