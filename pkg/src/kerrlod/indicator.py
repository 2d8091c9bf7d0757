"""Error indicator for the change of an element corrector under a new nonlinear weight.

For a corrector computed with weight ``w_old`` and a candidate weight
``w_new`` the indicator of element T is ::

    E_T^2 = sum_K  max_K |w_new - w_old|^2 * mu(T, K)

over the coarse elements K of the patch, with ``mu(T, K)`` the largest
generalized eigenvalue of the Gram matrix of ``chi_T phi_i - C_T phi_i`` on K
against the coarse mass matrix of T. The weights are piecewise constant on
the fine grid, so the L-infinity norm is a max over fine elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from kerrlod.corrector import ElementCorrector, _local_shape_functions
from kerrlod.fem import MASS_REF
from kerrlod.mesh import MeshHierarchy, grid_element_nodes


@dataclass(frozen=True)
class IndicatorFactors:
    element: int
    patch_elements: np.ndarray  # coarse element ids K of the patch
    mu: np.ndarray  # one factor per patch element
    cell_owner: np.ndarray  # patch fine cell -> position in patch_elements
    fine_elements: np.ndarray  # global ids of the patch fine cells


@dataclass
class IndicatorState:
    iteration: int
    values: np.ndarray
    tol: float
    marked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _cell_owner(hier: MeshHierarchy, corrector: ElementCorrector) -> np.ndarray:
    p = corrector.patch
    owner_global = hier.fine_to_coarse_element[p.fine_elements]
    pos = np.full(hier.coarse.num_elements, -1)
    pos[p.elements] = np.arange(len(p.elements))
    return pos[owner_global]


def local_gram_matrices(hier: MeshHierarchy, corrector: ElementCorrector):
    """Gram matrices of chi_T phi_i - C_T phi_i on each patch element, and the mass matrix of T."""
    p = corrector.patch
    nx, ny = p.fine_shape
    r, h = hier.ratio, hier.fine.size
    cells = grid_element_nodes(nx, ny)
    owner = _cell_owner(hier, corrector)

    # chi_T phi_i on the cells of T, evaluated per cell corner
    ox, oy = hier.element_offset_in_patch(p)
    shape = _local_shape_functions(r)  # ((r+1)^2, 4)
    chi = np.zeros((len(cells), 4, 4))
    cx, cy = np.meshgrid(np.arange(r), np.arange(r))
    t_cells = ((cy + oy) * nx + cx + ox).ravel()
    t_local_nodes = grid_element_nodes(r, r)
    chi[t_cells] = shape[t_local_nodes]  # (cells of T, corner, function)

    vals = chi - corrector.basis_corrections.T[cells]  # (cell, corner, function)
    M = h * h * MASS_REF
    per_cell = np.einsum("eai,ab,ebj->eij", vals.conj(), M, vals)
    gram = np.zeros((len(p.elements), 4, 4), dtype=complex)
    np.add.at(gram, owner, per_cell)
    H = hier.coarse.size
    return gram, H * H * MASS_REF, owner


def compute_factors(corrector: ElementCorrector, hier: MeshHierarchy) -> IndicatorFactors:
    gram, mass_T, owner = local_gram_matrices(hier, corrector)
    mu = np.empty(len(gram))
    for j, G in enumerate(gram):
        G = 0.5 * (G + G.conj().T)
        mu[j] = max(sla.eigh(G, mass_T, eigvals_only=True)[-1], 0.0)
    return IndicatorFactors(corrector.element, corrector.patch.elements, mu, owner, corrector.patch.fine_elements)


def evaluate_indicator(factors: IndicatorFactors, new_weight, old_weight_snapshot) -> float:
    """Indicator value for replacing the snapshot weight by ``new_weight``.

    Either weight may be given on the whole fine grid or on the patch fine
    elements only.
    """
    new = _on_patch(factors, new_weight)
    old = _on_patch(factors, old_weight_snapshot)
    diff = np.abs(new - old)
    worst = np.zeros(len(factors.mu))
    np.maximum.at(worst, factors.cell_owner, diff)
    return float(np.sqrt(np.sum(worst**2 * factors.mu)))


def _on_patch(factors: IndicatorFactors, weight) -> np.ndarray:
    w = np.asarray(getattr(weight, "values", weight), dtype=float)
    if len(w) == len(factors.fine_elements):
        return w
    if len(w) > factors.fine_elements.max():
        return w[factors.fine_elements]
    raise ValueError(f"weight of length {len(w)} does not match the patch")


def mark_elements(values: np.ndarray, tol: float, mode: str = "fixed", first: bool = False) -> tuple[np.ndarray, float]:
    """Elements whose indicator strictly exceeds the tolerance.

    ``mode="relative"`` interprets ``tol`` as a factor of the largest
    indicator. In the first iteration every element is marked.
    Returns the mask and the absolute tolerance used.
    """
    values = np.asarray(values, dtype=float)
    if first:
        return np.ones(len(values), dtype=bool), np.inf
    if mode == "relative":
        threshold = tol * (values.max() if len(values) else 0.0)
    elif mode == "fixed":
        threshold = tol
    else:
        raise ValueError(f"unknown tolerance mode {mode!r}")
    return values > threshold, float(threshold)
