"""jumplab: scale-function calculus, heat-kernel envelopes, and jump-process
simulation on fractal graphs, verified at desk scale."""

from . import construct, envelope, fractal, montecarlo, scalefn, transform
from .backend import available_backends, benchmark, select_backend

__version__ = "0.1.0"

__all__ = [
    "scalefn",
    "transform",
    "construct",
    "envelope",
    "fractal",
    "montecarlo",
    "available_backends",
    "select_backend",
    "benchmark",
    "__version__",
]
