"""Parametric balanced truncation with interpolated Gramians.

Two routes from Gramian factors at training parameters to a reduced model
at a new parameter: an algebraic one, whose online stage does not touch
anything of the full dimension, and a geometric one, interpolating factors
on the manifold of fixed-rank PSD matrices.
"""
from .bt import ExactModel, ReducedModel, balanced_truncation
from .grids import TensorGrid
from .interp_alg import OfflineData, offline_precompute, online_reduce
from .interp_geo import GeometricModel
from .system import ParametricSystem, assemble, load_system, make_heat_benchmark

__version__ = "0.1.0"

__all__ = [
    "ExactModel", "GeometricModel", "OfflineData", "ParametricSystem", "ReducedModel",
    "TensorGrid", "assemble", "balanced_truncation", "load_system", "make_heat_benchmark",
    "offline_precompute", "online_reduce",
]
