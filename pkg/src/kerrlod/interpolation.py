"""Quasi-interpolation I_H = pi_H o Pi_H and the fine-scale kernel constraints.

Pi_H is the elementwise L2 projection onto Q1 of each coarse element, pi_H
averages the element values at each coarse vertex over the elements sharing
it. Since all coarse elements are translates of each other the local
projection matrix is computed once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from kerrlod.fem import MASS_REF, assemble_cells, prolongation_matrix
from kerrlod.mesh import MeshHierarchy, MeshLevel, Patch


@dataclass(frozen=True)
class InterpolationOperator:
    matrix: sp.csr_matrix  # coarse nodes x fine nodes
    prolongation: sp.csr_matrix  # fine nodes x coarse nodes
    hierarchy: MeshHierarchy

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


@lru_cache(maxsize=None)
def local_projection(r: int, h: float) -> np.ndarray:
    """4 x (r+1)^2 matrix mapping fine nodal values on a coarse element to the
    corner values of its elementwise L2 projection."""
    M_fine = assemble_cells(r, r, h * h * MASS_REF, np.ones(r * r)).toarray()
    P = prolongation_matrix(MeshLevel(1), MeshLevel(r)).toarray() if r > 1 else np.eye(4)
    M_coarse = P.T @ M_fine @ P
    return np.linalg.solve(M_coarse, P.T @ M_fine)


def _vertex_counts(coarse: MeshLevel) -> np.ndarray:
    counts = np.zeros(coarse.num_nodes)
    np.add.at(counts, coarse.element_nodes, 1.0)
    return counts


def build_IH(hier: MeshHierarchy) -> InterpolationOperator:
    coarse = hier.coarse
    L = local_projection(hier.ratio, hier.fine.size)
    counts = _vertex_counts(coarse)
    rows, cols, data = [], [], []
    for t in range(coarse.num_elements):
        fine_nodes = hier.coarse_element_fine_nodes(t)
        corners = coarse.element_nodes[t]
        rows.append(np.repeat(corners, len(fine_nodes)))
        cols.append(np.tile(fine_nodes, 4))
        data.append((L / counts[corners][:, None]).ravel())
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.num_nodes, hier.fine.num_nodes),
    ).tocsr()
    matrix.eliminate_zeros()
    return InterpolationOperator(matrix, prolongation_matrix(coarse, hier.fine), hier)


def kernel_basis_constraints(op: InterpolationOperator, p: Patch) -> sp.csr_matrix:
    """Rows of I_H for the coarse nodes of the patch, columns restricted to patch fine nodes.

    A fine function w supported in the patch lies in the fine-scale space iff
    this matrix annihilates its patch-local values.
    """
    if len(p.elements) == 0:
        raise ValueError("empty patch")
    return op.matrix[p.coarse_nodes][:, p.fine_nodes].tocsr()
