"""Q1 assembly of the sesquilinear forms of the Kerr-Helmholtz problem.

All coefficients are piecewise constant on the fine grid, so every matrix is a
weighted sum of exact reference element matrices. Matrices are complex
symmetric (``M.T == M``), not Hermitian. The sesquilinear form of a matrix
``S`` is ``B(u, v) = v.conj() @ S @ u``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from kerrlod.mesh import CORNERS, MeshLevel, grid_element_nodes

# Q1 stiffness on a square is independent of the side length in 2D
STIFFNESS_REF = np.array(
    [
        [4.0, -1.0, -1.0, -2.0],
        [-1.0, 4.0, -2.0, -1.0],
        [-1.0, -2.0, 4.0, -1.0],
        [-2.0, -1.0, -1.0, 4.0],
    ]
) / 6.0
MASS_REF = np.array(
    [
        [4.0, 2.0, 2.0, 1.0],
        [2.0, 4.0, 1.0, 2.0],
        [2.0, 1.0, 4.0, 2.0],
        [1.0, 2.0, 2.0, 4.0],
    ]
) / 36.0
EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


class SingularSystemError(RuntimeError):
    """A factorization broke down or produced a result violating the residual bound."""


@dataclass(frozen=True)
class CoefficientField:
    """Real piecewise-constant field, one value per element of ``level``."""

    values: np.ndarray
    level: MeshLevel
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.level.num_elements,):
            raise ValueError(f"expected {self.level.num_elements} element values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)
        if self.lower is not None and vals.min() < self.lower:
            raise ValueError(f"field value {vals.min()} below lower bound {self.lower}")
        if self.upper is not None and vals.max() > self.upper:
            raise ValueError(f"field value {vals.max()} above upper bound {self.upper}")

    @classmethod
    def constant(cls, value: float, level: MeshLevel) -> CoefficientField:
        return cls(np.full(level.num_elements, float(value)), level)

    def __mul__(self, other):
        if isinstance(other, CoefficientField):
            return CoefficientField(self.values * other.values, self.level)
        return CoefficientField(self.values * other, self.level)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, CoefficientField):
            return CoefficientField(self.values + other.values, self.level)
        return CoefficientField(self.values + other, self.level)


def assemble_cells(nx: int, ny: int, local: np.ndarray, weights: np.ndarray) -> sp.csr_matrix:
    """Sum ``weights[c] * local`` over the cells of an nx-by-ny grid."""
    nodes = grid_element_nodes(nx, ny)
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    data = (np.asarray(weights)[:, None] * local.ravel()[None, :]).ravel()
    npts = (nx + 1) * (ny + 1)
    return sp.coo_matrix((data, (rows, cols)), shape=(npts, npts)).tocsr()


def grid_boundary_edges(nx: int, ny: int, sides=(True, True, True, True)) -> np.ndarray:
    """Node pairs of the grid edges on the selected (left, right, bottom, top) sides."""
    left, right, bottom, top = sides
    iy, ix = np.arange(ny), np.arange(nx)
    parts = []
    if left:
        parts.append(np.column_stack([iy * (nx + 1), (iy + 1) * (nx + 1)]))
    if right:
        parts.append(np.column_stack([iy * (nx + 1) + nx, (iy + 1) * (nx + 1) + nx]))
    if bottom:
        parts.append(np.column_stack([ix, ix + 1]))
    if top:
        parts.append(np.column_stack([ix, ix + 1]) + ny * (nx + 1))
    if not parts:
        return np.zeros((0, 2), dtype=int)
    return np.vstack(parts)


def grid_boundary_mass(nx: int, ny: int, h: float, sides=(True, True, True, True)) -> sp.csr_matrix:
    edges = grid_boundary_edges(nx, ny, sides)
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    data = np.tile(h * EDGE_MASS_REF.ravel(), len(edges))
    npts = (nx + 1) * (ny + 1)
    return sp.coo_matrix((data, (rows, cols)), shape=(npts, npts)).tocsr()


def grid_blin(nx, ny, h, a_cells, m_cells, k, sides) -> sp.csr_matrix:
    """Stiffness(a) - mass(m) + i k boundary mass on a grid of square cells of side h."""
    S = assemble_cells(nx, ny, STIFFNESS_REF, a_cells)
    M = assemble_cells(nx, ny, h * h * MASS_REF, m_cells)
    out = (S - M).astype(complex)
    if any(sides):
        out = out + 1j * k * grid_boundary_mass(nx, ny, h, sides)
    return out.tocsr()


@lru_cache(maxsize=None)
def prolongation_matrix(coarse: MeshLevel, fine: MeshLevel) -> sp.csr_matrix:
    """Exact embedding of coarse Q1 functions into the fine Q1 space (fine x coarse)."""
    nc, nf = coarse.cells_per_axis, fine.cells_per_axis
    r = nf // nc
    x = np.arange(nf + 1)
    # 1D weights: fine node i has parent coarse nodes i//r and i//r+1
    lo = np.minimum(x // r, nc - 1)
    t = (x - lo * r) / r
    rows, cols, data = [], [], []
    fx, fy = np.meshgrid(x, x)
    fx, fy = fx.ravel(), fy.ravel()
    fid = fy * (nf + 1) + fx
    for dx, dy in CORNERS:
        wx = t[fx] if dx else 1 - t[fx]
        wy = t[fy] if dy else 1 - t[fy]
        cid = (lo[fy] + dy) * (nc + 1) + lo[fx] + dx
        w = wx * wy
        keep = w != 0
        rows.append(fid[keep])
        cols.append(cid[keep])
        data.append(w[keep])
    P = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.num_nodes, coarse.num_nodes),
    )
    return P.tocsr()


def _galerkin(matrix: sp.spmatrix, field_level: MeshLevel, level: MeshLevel | None):
    if level is None or level == field_level:
        return matrix.tocsr()
    P = prolongation_matrix(level, field_level)
    return (P.T @ matrix @ P).tocsr()


def assemble_stiffness(A: CoefficientField, level: MeshLevel | None = None) -> sp.csr_matrix:
    """(A grad u, grad v). On a coarser ``level`` the fine contributions are summed exactly."""
    if np.any(A.values <= 0):
        raise ValueError("diffusion coefficient must be positive")
    n = A.level.cells_per_axis
    return _galerkin(assemble_cells(n, n, STIFFNESS_REF, A.values), A.level, level)


def assemble_weighted_mass(w: CoefficientField, level: MeshLevel | None = None) -> sp.csr_matrix:
    """(w u, v) for a non-negative piecewise-constant weight."""
    if np.any(w.values < 0):
        raise ValueError("mass weight must be non-negative")
    n, h = w.level.cells_per_axis, w.level.size
    return _galerkin(assemble_cells(n, n, h * h * MASS_REF, w.values), w.level, level)


def assemble_boundary_mass(level: MeshLevel) -> sp.csr_matrix:
    n = level.cells_per_axis
    return grid_boundary_mass(n, n, level.size)


def nonlinear_weight(phi: np.ndarray, n: CoefficientField, eps: CoefficientField) -> CoefficientField:
    """n * eps * |phi|^2 with |phi|^2 replaced by its mean over the four element nodes."""
    level = n.level
    phi = np.asarray(phi)
    if phi.shape != (level.num_nodes,):
        raise ValueError("phi must be a nodal function on the coefficient level")
    mod2 = np.abs(phi[level.element_nodes]) ** 2
    return CoefficientField(n.values * eps.values * mod2.mean(axis=1), level)


def assemble_Blin(phi, A: CoefficientField, n: CoefficientField, eps: CoefficientField, k: float) -> sp.csr_matrix:
    """Matrix of B_lin(phi; u, v) on the level of the coefficients.

    ``phi=None`` is the linear Helmholtz form.
    """
    m = n.values if phi is None else n.values + nonlinear_weight(phi, n, eps).values
    return blin_from_weights(A, k * k * m, k)


def blin_from_weights(A: CoefficientField, mass_weight: np.ndarray, k: float) -> sp.csr_matrix:
    level = A.level
    nn = level.cells_per_axis
    return grid_blin(nn, nn, level.size, A.values, mass_weight, k, (True,) * 4)


def load_vector(f, g=None, level: MeshLevel | None = None) -> np.ndarray:
    """Entries (f, phi_j) + (g, phi_j)_boundary for real basis functions phi_j.

    ``f`` is either one value per element (piecewise constant) or one value per
    node (interpreted as a Q1 function); ``g`` is a nodal function whose
    boundary trace is used.
    """
    f = np.asarray(f)
    if level is None:
        level = _level_from_length(len(f))
    nn, h = level.cells_per_axis, level.size
    if f.shape == (level.num_elements,):
        b = np.zeros(level.num_nodes, dtype=complex)
        np.add.at(b, level.element_nodes, (f * h * h / 4)[:, None])
    elif f.shape == (level.num_nodes,):
        b = assemble_cells(nn, nn, h * h * MASS_REF, np.ones(level.num_elements)) @ f.astype(complex)
    else:
        raise ValueError(f"f has {f.shape[0]} entries; expected elements or nodes of a {nn}x{nn} mesh")
    if g is not None:
        b = b + assemble_boundary_mass(level) @ np.asarray(g, dtype=complex)
    return b


def _level_from_length(num: int) -> MeshLevel:
    for m in (int(round(np.sqrt(num))) - 1, int(round(np.sqrt(num)))):
        lvl = MeshLevel(max(m, 1))
        if num in (lvl.num_nodes, lvl.num_elements):
            return lvl
    raise ValueError(f"cannot infer a square mesh from {num} entries")


@lru_cache(maxsize=None)
def unit_matrices(level: MeshLevel) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Stiffness and mass matrices with unit coefficients."""
    n, h = level.cells_per_axis, level.size
    ones = np.ones(level.num_elements)
    return assemble_cells(n, n, STIFFNESS_REF, ones), assemble_cells(n, n, h * h * MASS_REF, ones)


def energy_norm(v: np.ndarray, k: float, level: MeshLevel | None = None) -> float:
    v = np.asarray(v)
    if level is None:
        level = _level_from_length(len(v))
    S, M = unit_matrices(level)
    val = np.vdot(v, S @ v).real + k * k * np.vdot(v, M @ v).real
    return float(np.sqrt(max(val, 0.0)))


def factorize(M: sp.spmatrix):
    """Sparse LU factorization; returns a solve callable accepting vectors or column blocks."""
    M = sp.csc_matrix(M)
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    return lu.solve


def sparse_solve(M: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct solve with a residual check ``|Mx-b| <= 1e-10 (|M|_F |x| + |b|)``."""
    b = np.asarray(b)
    dtype = np.result_type(M.dtype, b.dtype)
    x = factorize(M.astype(dtype))(b.astype(dtype))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite entries in the solution")
    res = np.linalg.norm(M @ x - b)
    bound = 1e-10 * (spla.norm(M) * np.linalg.norm(x) + np.linalg.norm(b))
    if res > bound:
        raise SingularSystemError(f"residual {res:.3e} exceeds bound {bound:.3e}")
    return x
