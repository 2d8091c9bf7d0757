"""Nested uniform quadrilateral meshes on the unit square.

Nodes and elements are numbered lexicographically with x running fastest:
node ``(ix, iy)`` has id ``iy * (N + 1) + ix`` and element ``(ix, iy)`` has
id ``iy * N + ix``. Local element corners follow the same order:
(0,0), (1,0), (0,1), (1,1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# corner offsets (dx, dy) in local lexicographic order
CORNERS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])


class MeshError(ValueError):
    pass


def grid_element_nodes(nx: int, ny: int) -> np.ndarray:
    """Node ids of the four corners of every cell of an nx-by-ny grid."""
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ix, iy = ix.ravel(), iy.ravel()
    base = iy * (nx + 1) + ix
    return np.stack([base, base + 1, base + nx + 1, base + nx + 2], axis=1)


@dataclass(frozen=True)
class MeshLevel:
    cells_per_axis: int

    def __post_init__(self):
        n = self.cells_per_axis
        if n < 1 or n & (n - 1):
            raise MeshError(f"cells_per_axis must be a positive power of two, got {n}")

    @property
    def size(self) -> float:
        return 1.0 / self.cells_per_axis

    @property
    def num_nodes(self) -> int:
        return (self.cells_per_axis + 1) ** 2

    @property
    def num_elements(self) -> int:
        return self.cells_per_axis**2

    @cached_property
    def element_nodes(self) -> np.ndarray:
        n = self.cells_per_axis
        return grid_element_nodes(n, n)

    @cached_property
    def node_coords(self) -> np.ndarray:
        n = self.cells_per_axis
        x, y = np.meshgrid(np.linspace(0, 1, n + 1), np.linspace(0, 1, n + 1))
        return np.column_stack([x.ravel(), y.ravel()])

    @cached_property
    def element_midpoints(self) -> np.ndarray:
        n = self.cells_per_axis
        c = (np.arange(n) + 0.5) / n
        x, y = np.meshgrid(c, c)
        return np.column_stack([x.ravel(), y.ravel()])

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Node pairs of all boundary edges; each piece of the boundary appears once."""
        n = self.cells_per_axis
        i = np.arange(n)
        bottom = np.column_stack([i, i + 1])
        top = bottom + n * (n + 1)
        left = np.column_stack([i * (n + 1), (i + 1) * (n + 1)])
        right = left + n
        return np.vstack([bottom, top, left, right])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def node_id(self, ix, iy):
        return np.asarray(iy) * (self.cells_per_axis + 1) + np.asarray(ix)

    def element_id(self, ix, iy):
        return np.asarray(iy) * self.cells_per_axis + np.asarray(ix)


@dataclass(frozen=True)
class Patch:
    """An l-layer patch around a coarse element.

    On a tensor grid the vertex-neighbourhood recursion always yields a box of
    coarse elements; ``box`` holds its half-open index ranges
    ``(x0, x1, y0, y1)`` in coarse element units.
    """

    center_element: int
    layers: int
    box: tuple[int, int, int, int]
    elements: np.ndarray
    coarse_nodes: np.ndarray
    fine_nodes: np.ndarray
    fine_elements: np.ndarray
    interior_mask: np.ndarray
    fine_shape: tuple[int, int]
    boundary_sides: tuple[bool, bool, bool, bool] = field(default=(False,) * 4)

    @property
    def num_fine_nodes(self) -> int:
        return len(self.fine_nodes)


@dataclass(frozen=True)
class RestrictionMaps:
    fine_local_to_global: np.ndarray
    fine_global_to_local: np.ndarray  # -1 outside the patch
    coarse_local_to_global: np.ndarray
    coarse_global_to_local: np.ndarray


@dataclass(frozen=True)
class MeshHierarchy:
    coarse: MeshLevel
    coeff: MeshLevel
    fine: MeshLevel

    def __post_init__(self):
        nc, ne, nf = (lvl.cells_per_axis for lvl in (self.coarse, self.coeff, self.fine))
        if not nc <= ne <= nf:
            raise MeshError(f"levels do not nest: H=1/{nc}, eta=1/{ne}, h=1/{nf}")

    @property
    def ratio(self) -> int:
        """Fine cells per coarse cell along one axis."""
        return self.fine.cells_per_axis // self.coarse.cells_per_axis

    @cached_property
    def coarse_to_fine_elements(self) -> np.ndarray:
        """Row T lists the fine elements inside coarse element T (local lexicographic order)."""
        return _children(self.coarse.cells_per_axis, self.ratio)

    @cached_property
    def coeff_to_fine_elements(self) -> np.ndarray:
        return _children(self.coeff.cells_per_axis, self.fine.cells_per_axis // self.coeff.cells_per_axis)

    @cached_property
    def fine_to_coarse_element(self) -> np.ndarray:
        out = np.empty(self.fine.num_elements, dtype=int)
        for t, kids in enumerate(self.coarse_to_fine_elements):
            out[kids] = t
        return out

    def coarse_element_fine_nodes(self, t: int) -> np.ndarray:
        """Global fine node ids of coarse element t, local lexicographic order."""
        nc, r = self.coarse.cells_per_axis, self.ratio
        tx, ty = t % nc, t // nc
        ix, iy = np.meshgrid(np.arange(tx * r, tx * r + r + 1), np.arange(ty * r, ty * r + r + 1))
        return self.fine.node_id(ix.ravel(), iy.ravel())

    def patch(self, t: int, layers: int) -> Patch:
        nc = self.coarse.cells_per_axis
        if not 0 <= t < self.coarse.num_elements:
            raise MeshError(f"coarse element {t} out of range")
        if layers < 0:
            raise MeshError("layers must be non-negative")
        tx, ty = t % nc, t // nc
        x0, x1 = max(tx - layers, 0), min(tx + layers + 1, nc)
        y0, y1 = max(ty - layers, 0), min(ty + layers + 1, nc)
        ex, ey = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        elements = self.coarse.element_id(ex.ravel(), ey.ravel())
        cx, cy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        coarse_nodes = self.coarse.node_id(cx.ravel(), cy.ravel())

        r, nf = self.ratio, self.fine.cells_per_axis
        fx0, fx1, fy0, fy1 = x0 * r, x1 * r, y0 * r, y1 * r
        fx, fy = np.meshgrid(np.arange(fx0, fx1 + 1), np.arange(fy0, fy1 + 1))
        fx, fy = fx.ravel(), fy.ravel()
        fine_nodes = self.fine.node_id(fx, fy)
        kx, ky = np.meshgrid(np.arange(fx0, fx1), np.arange(fy0, fy1))
        fine_elements = self.fine.element_id(kx.ravel(), ky.ravel())

        # (left, right, bottom, top) sides of the patch lying on the domain boundary
        sides = (fx0 == 0, fx1 == nf, fy0 == 0, fy1 == nf)
        # closed patch sides inside D carry the zero trace, endpoints on the domain boundary included
        dirichlet = (
            ((fx == fx0) & (not sides[0])) | ((fx == fx1) & (not sides[1]))
            | ((fy == fy0) & (not sides[2])) | ((fy == fy1) & (not sides[3]))
        )
        return Patch(
            center_element=t,
            layers=layers,
            box=(x0, x1, y0, y1),
            elements=elements,
            coarse_nodes=coarse_nodes,
            fine_nodes=fine_nodes,
            fine_elements=fine_elements,
            interior_mask=dirichlet,
            fine_shape=(fx1 - fx0, fy1 - fy0),
            boundary_sides=sides,
        )

    def restriction_maps(self, p: Patch) -> RestrictionMaps:
        fine_g2l = np.full(self.fine.num_nodes, -1)
        fine_g2l[p.fine_nodes] = np.arange(len(p.fine_nodes))
        coarse_g2l = np.full(self.coarse.num_nodes, -1)
        coarse_g2l[p.coarse_nodes] = np.arange(len(p.coarse_nodes))
        return RestrictionMaps(p.fine_nodes, fine_g2l, p.coarse_nodes, coarse_g2l)

    def element_offset_in_patch(self, p: Patch) -> tuple[int, int]:
        """Fine-cell offset (x, y) of the patch's center element inside the patch grid."""
        nc, r = self.coarse.cells_per_axis, self.ratio
        t = p.center_element
        return ((t % nc - p.box[0]) * r, (t // nc - p.box[2]) * r)


def _children(n_coarse: int, r: int) -> np.ndarray:
    tx, ty = np.meshgrid(np.arange(n_coarse), np.arange(n_coarse))
    tx, ty = tx.ravel(), ty.ravel()
    lx, ly = np.meshgrid(np.arange(r), np.arange(r))
    lx, ly = lx.ravel(), ly.ravel()
    fx = tx[:, None] * r + lx[None, :]
    fy = ty[:, None] * r + ly[None, :]
    return fy * (n_coarse * r) + fx


def build_hierarchy(H_exp: int, eta_exp: int, h_exp: int) -> MeshHierarchy:
    """Dyadic hierarchy with 2**exp cells per axis on each level."""
    exps = (H_exp, eta_exp, h_exp)
    if min(exps) < 0:
        raise MeshError(f"exponents must be non-negative, got {exps}")
    if not H_exp <= eta_exp <= h_exp:
        raise MeshError(f"need H_exp <= eta_exp <= h_exp, got {exps}")
    return MeshHierarchy(*(MeshLevel(2**e) for e in exps))
