"""Localized element correctors and the Petrov-Galerkin LOD coarse system.

Each element corrector solves, on the fine grid of its patch, the saddle point
system ::

    [ B_patch  C^T ] [w]   [B_T v]
    [ C        0   ] [l] = [  0  ]

where ``C`` are the quasi-interpolation rows of the patch and fine nodes on
the patch boundary inside the domain are eliminated (zero trace). One LU
factorization serves the four local coarse shape functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from kerrlod.fem import (
    CoefficientField,
    SingularSystemError,
    blin_from_weights,
    factorize,
    grid_blin,
    prolongation_matrix,
)
from kerrlod.interpolation import InterpolationOperator, kernel_basis_constraints
from kerrlod.mesh import MeshHierarchy, MeshLevel, Patch


@dataclass
class ElementCorrector:
    element: int
    layers: int
    patch: Patch
    basis_corrections: np.ndarray  # (4, patch fine nodes), complex
    weight_snapshot: np.ndarray  # n*eps*|phi|^2 on the patch fine elements
    factors: np.ndarray | None = field(default=None)  # indicator factors per patch coarse element

    def global_vector(self, i: int, num_fine_nodes: int) -> np.ndarray:
        out = np.zeros(num_fine_nodes, dtype=complex)
        out[self.patch.fine_nodes] = self.basis_corrections[i]
        return out


def _local_shape_functions(r: int) -> np.ndarray:
    """Values of the four Q1 shape functions of a coarse element at its (r+1)^2 fine nodes."""
    return prolongation_matrix(MeshLevel(1), MeshLevel(r)).toarray()


def element_load(hier: MeshHierarchy, p: Patch, a_p, m_p, k) -> np.ndarray:
    """Patch-local right-hand sides B_T(phi; v_i, .) for the four shape functions of the centre element.

    ``a_p`` and ``m_p`` are the stiffness and mass weights on the patch fine elements.
    """
    nx, ny = p.fine_shape
    r = hier.ratio
    ox, oy = hier.element_offset_in_patch(p)
    cx, cy = np.meshgrid(np.arange(ox, ox + r), np.arange(oy, oy + r))
    cells = (cy * nx + cx).ravel()
    nc = hier.coarse.cells_per_axis
    t = p.center_element
    tx, ty = t % nc, t // nc
    sides = (tx == 0, tx == nc - 1, ty == 0, ty == nc - 1)
    S_T = grid_blin(r, r, hier.fine.size, a_p[cells], m_p[cells], k, sides)
    rhs_T = S_T @ _local_shape_functions(r)
    lx, ly = np.meshgrid(np.arange(ox, ox + r + 1), np.arange(oy, oy + r + 1))
    nodes = (ly * (nx + 1) + lx).ravel()
    rhs = np.zeros((p.num_fine_nodes, 4), dtype=complex)
    rhs[nodes] = rhs_T
    return rhs


def _patch_coefficients(p: Patch, weight, A, n, k):
    a_p = A.values[p.fine_elements]
    w_p = np.zeros(len(p.fine_elements)) if weight is None else np.asarray(_values(weight))[p.fine_elements]
    m_p = k * k * (n.values[p.fine_elements] + w_p)
    return a_p, m_p, w_p


def _values(field_or_array):
    return field_or_array.values if isinstance(field_or_array, CoefficientField) else field_or_array


def patch_matrix(hier: MeshHierarchy, p: Patch, a_p, m_p, k) -> sp.csr_matrix:
    nx, ny = p.fine_shape
    return grid_blin(nx, ny, hier.fine.size, a_p, m_p, k, p.boundary_sides)


def _solve_saddle(B: sp.csr_matrix, C: sp.csr_matrix, rhs: np.ndarray, free: np.ndarray) -> np.ndarray:
    Bf = B[free][:, free]
    Cf = C[:, free].tocsr()
    nonzero_rows = np.diff(Cf.indptr) > 0
    Cf = Cf[nonzero_rows]
    nc = Cf.shape[0]
    K = sp.bmat([[Bf, Cf.T], [Cf, None]], format="csc").astype(complex)
    b = np.zeros((K.shape[0], rhs.shape[1]), dtype=complex)
    b[: len(free)] = rhs[free]
    sol = factorize(K)(b)
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("corrector saddle point system is singular")
    out = np.zeros((B.shape[0], rhs.shape[1]), dtype=complex)
    out[free] = sol[: len(free)]
    return out


def compute_element_corrector(
    hier: MeshHierarchy,
    op: InterpolationOperator,
    t: int,
    ell: int,
    weight,
    A: CoefficientField,
    n: CoefficientField,
    k: float,
    adjoint: bool = False,
) -> ElementCorrector:
    """Element corrector of coarse element ``t`` on its ``ell``-layer patch.

    ``weight`` is the nonlinear weight n*eps*|phi|^2 on the fine elements
    (a CoefficientField, an array, or None for zero). With ``adjoint=True`` the
    adjoint corrector problem is solved directly (conjugate-transposed forms).
    """
    p = hier.patch(t, ell)
    a_p, m_p, w_p = _patch_coefficients(p, weight, A, n, k)
    B = patch_matrix(hier, p, a_p, m_p, k)
    rhs = element_load(hier, p, a_p, m_p, k)
    if adjoint:
        # B_T(w, v) tested against w: rhs entries are conj(S_T^H v) rows, i.e. S_T^H v
        B = B.conj().T.tocsr()
        rhs = rhs.conj()
    C = kernel_basis_constraints(op, p)
    free = np.flatnonzero(~p.interior_mask)
    w = _solve_saddle(B, C, rhs, free)
    return ElementCorrector(t, ell, p, w.T.copy(), w_p.copy())


def adjoint_corrector_from(c: ElementCorrector) -> ElementCorrector:
    """Adjoint corrector via conj(C conj(v)); the coarse shape functions are real."""
    return ElementCorrector(
        c.element, c.layers, c.patch, c.basis_corrections.conj(), c.weight_snapshot.copy(), c.factors
    )


@dataclass
class LodSystem:
    matrix: sp.csr_matrix  # coarse Petrov-Galerkin matrix
    load: np.ndarray  # coarse load
    basis: sp.csr_matrix  # fine x coarse: prolongation minus summed corrections
    fine_matrix: sp.csr_matrix  # B_lin on the fine grid used for the entries


def corrector_matrix(hier: MeshHierarchy, correctors) -> sp.csr_matrix:
    """Fine x coarse matrix whose column j is the summed element correction of coarse hat j."""
    shape = (hier.fine.num_nodes, hier.coarse.num_nodes)
    if not correctors:
        return sp.csr_matrix(shape, dtype=complex)
    rows, cols, data = [], [], []
    for c in correctors:
        corners = hier.coarse.element_nodes[c.element]
        for i in range(4):
            rows.append(c.patch.fine_nodes)
            cols.append(np.full(c.patch.num_fine_nodes, corners[i]))
            data.append(c.basis_corrections[i])
    Q = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
    Q = Q.tocsr()
    Q.eliminate_zeros()
    return Q


def assemble_lod_system(
    hier: MeshHierarchy,
    correctors,
    weight,
    A: CoefficientField,
    n: CoefficientField,
    k: float,
    load: np.ndarray,
) -> LodSystem:
    """Petrov-Galerkin LOD system: corrected trial functions, plain coarse test functions.

    ``correctors`` is one ElementCorrector per coarse element or None (plain
    coarse FEM). Entries are evaluated with the fine-grid form B_lin(phi).
    """
    if correctors is not None:
        if len(correctors) != hier.coarse.num_elements:
            raise ValueError("need one corrector per coarse element")
        if len({c.layers for c in correctors}) > 1:
            raise ValueError("correctors with different numbers of layers")
    P = prolongation_matrix(hier.coarse, hier.fine)
    w = np.zeros(hier.fine.num_elements) if weight is None else np.asarray(_values(weight))
    S = blin_from_weights(A, k * k * (n.values + w), k)
    basis = (P - corrector_matrix(hier, correctors)).tocsr()
    matrix = (P.T @ (S @ basis)).tocsr()
    return LodSystem(matrix, P.T @ load, basis, S)


def prolongate_ms_solution(sys: LodSystem, coarse_solution: np.ndarray) -> np.ndarray:
    return sys.basis @ coarse_solution
