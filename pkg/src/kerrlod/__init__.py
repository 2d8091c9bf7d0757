"""Adaptive iterative LOD for the heterogeneous Helmholtz equation with Kerr nonlinearity."""

from kerrlod.mesh import MeshHierarchy, MeshLevel, Patch, build_hierarchy
from kerrlod.fem import CoefficientField, SingularSystemError

__all__ = [
    "CoefficientField",
    "MeshHierarchy",
    "MeshLevel",
    "Patch",
    "SingularSystemError",
    "build_hierarchy",
]
