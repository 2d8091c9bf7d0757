"""Scenario library: coefficient fields, sources and the three benchmark examples.

Random fields draw i.i.d. uniform values per coefficient-mesh element from
numpy's PCG64 generator seeded with ``SeedSequence([seed, stream])``, one
stream per field (A: 0, n: 1, eps: 2), in lexicographic element order.
Regions ("boxes") are tested at coefficient-mesh element midpoints, so every
field is constant on coefficient elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from kerrlod.fem import CoefficientField, load_vector
from kerrlod.mesh import MeshHierarchy, MeshLevel, build_hierarchy

Box = tuple[float, float, float, float]  # x0, x1, y0, y1

STREAMS = {"A": 0, "n": 1, "eps": 2}


def in_box(points: np.ndarray, box: Box | None) -> np.ndarray:
    if box is None:
        return np.ones(len(points), dtype=bool)
    x0, x1, y0, y1 = box
    x, y = points[:, 0], points[:, 1]
    return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


@dataclass(frozen=True)
class Constant:
    value: float

    def cell_values(self, level: MeshLevel, rng) -> np.ndarray:
        return np.full(level.num_elements, float(self.value))

    @property
    def bounds(self):
        return self.value, self.value


@dataclass(frozen=True)
class UniformRandom:
    """Uniform values in [low, high] inside ``box``, ``outside`` elsewhere."""

    low: float
    high: float
    box: Box | None = None
    outside: float = 1.0

    def cell_values(self, level: MeshLevel, rng) -> np.ndarray:
        draws = rng.uniform(self.low, self.high, level.num_elements)
        return np.where(in_box(level.element_midpoints, self.box), draws, self.outside)

    @property
    def bounds(self):
        if self.box is None:
            return self.low, self.high
        return min(self.low, self.outside), max(self.high, self.outside)


@dataclass(frozen=True)
class Indicator:
    value: float
    box: Box
    outside: float = 0.0

    def cell_values(self, level: MeshLevel, rng) -> np.ndarray:
        return np.where(in_box(level.element_midpoints, self.box), self.value, self.outside)

    @property
    def bounds(self):
        return min(self.value, self.outside), max(self.value, self.outside)


@dataclass(frozen=True)
class Raster:
    """Cell values of an (ny, nx) raster stretched over ``box``; ``outside`` elsewhere.

    Row j of the raster covers the j-th horizontal strip from the bottom.
    """

    values: np.ndarray
    box: Box = (0.0, 1.0, 0.0, 1.0)
    outside: float = 1.0

    def sample(self, points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.values, dtype=float)
        ny, nx = vals.shape
        x0, x1, y0, y1 = self.box
        ix = np.clip(np.floor((points[:, 0] - x0) / (x1 - x0) * nx).astype(int), 0, nx - 1)
        iy = np.clip(np.floor((points[:, 1] - y0) / (y1 - y0) * ny).astype(int), 0, ny - 1)
        return np.where(in_box(points, self.box), vals[iy, ix], self.outside)

    def cell_values(self, level: MeshLevel, rng) -> np.ndarray:
        return self.sample(level.element_midpoints)

    @property
    def bounds(self):
        vals = np.asarray(self.values, dtype=float)
        return min(vals.min(), self.outside), max(vals.max(), self.outside)

    @classmethod
    def read(cls, path, box: Box = (0.0, 1.0, 0.0, 1.0), outside: float = 1.0) -> Raster:
        """Plain text: a header line ``nx ny`` followed by ny*nx values, row by row."""
        tokens = Path(path).read_text().split()
        if len(tokens) < 2:
            raise ValueError(f"{path}: missing 'nx ny' header")
        nx, ny = int(tokens[0]), int(tokens[1])
        data = np.array([float(t) for t in tokens[2:]])
        if data.size != nx * ny:
            raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
        return cls(data.reshape(ny, nx), box, outside)

    def write(self, path) -> None:
        vals = np.asarray(self.values, dtype=float)
        ny, nx = vals.shape
        lines = [f"{nx} {ny}"] + [" ".join(repr(float(v)) for v in row) for row in vals]
        Path(path).write_text("\n".join(lines) + "\n")


def checkerboard(cells: int, a: float, b: float) -> np.ndarray:
    i = np.arange(cells)
    return np.where((i[:, None] + i[None, :]) % 2 == 0, a, b)


def random_field(low, high, hier: MeshHierarchy, seed: int, box: Box | None = None, stream: int = 0,
                 outside: float = 1.0) -> CoefficientField:
    """i.i.d. uniform values per coefficient element, replicated to the fine mesh.

    Elements outside ``box`` are set to ``outside`` (the boundary collar).
    """
    if low > high:
        raise ValueError("need low <= high")
    spec = UniformRandom(low, high, box, outside)
    return to_fine(spec.cell_values(hier.coeff, make_rng(seed, stream)), hier, spec.bounds)


def make_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def to_fine(cell_values: np.ndarray, hier: MeshHierarchy, bounds=(None, None)) -> CoefficientField:
    fine = np.empty(hier.fine.num_elements)
    fine[hier.coeff_to_fine_elements] = np.asarray(cell_values)[:, None]
    return CoefficientField(fine, hier.fine, *bounds)


@dataclass
class Problem:
    """A scenario discretized on a mesh hierarchy."""

    name: str
    hierarchy: MeshHierarchy
    k: float
    A: CoefficientField
    n: CoefficientField
    eps: CoefficientField
    load: np.ndarray
    seed: int = 0

    def with_coarse(self, H_exp: int) -> Problem:
        hier = self.hierarchy
        new = MeshHierarchy(MeshLevel(2**H_exp), hier.coeff, hier.fine)
        return replace(self, hierarchy=new)

    def linear(self) -> Problem:
        return replace(self, eps=CoefficientField.constant(0.0, self.hierarchy.fine))


@dataclass
class Scenario:
    name: str
    k: float
    A: object
    n: object
    eps: object
    source: Callable[[np.ndarray], np.ndarray]  # points -> complex values
    boundary: Callable[[np.ndarray], np.ndarray] | None = None
    seed: int = 0
    nonlinear_box: Box | None = None
    collar_box: Box | None = None
    notes: dict = field(default_factory=dict)

    def fields(self, hier: MeshHierarchy) -> dict[str, CoefficientField]:
        out = {}
        for name in ("A", "n", "eps"):
            spec = getattr(self, name)
            vals = spec.cell_values(hier.coeff, make_rng(self.seed, STREAMS[name]))
            out[name] = to_fine(vals, hier, spec.bounds)
        return out

    def discretize(self, hier: MeshHierarchy) -> Problem:
        fields = self.fields(hier)
        if fields["A"].values.min() <= 0 or fields["n"].values.min() <= 0 or fields["eps"].values.min() < 0:
            raise ValueError(f"{self.name}: coefficient bounds violated")
        f = self.source(hier.fine.element_midpoints)
        g = None if self.boundary is None else self.boundary(hier.fine.node_coords)
        load = load_vector(f, g, hier.fine)
        return Problem(self.name, hier, self.k, fields["A"], fields["n"], fields["eps"], load, self.seed)


# Example 1: smooth bump source


def bump_source(center=(0.5, 0.5), radius=0.05, amplitude=1e4):
    c = np.asarray(center)

    def f(points: np.ndarray) -> np.ndarray:
        rho = np.linalg.norm(np.atleast_2d(points) - c, axis=1) / radius
        out = np.zeros(len(rho))
        inside = rho < 1
        out[inside] = amplitude * np.exp(-1.0 / (1.0 - rho[inside]))
        return out.astype(complex)

    return f


def example1(seed: int = 0) -> Scenario:
    """Point-like source with random A, n, eps (eps active on a small box)."""
    collar = (0.15, 0.85, 0.15, 0.85)
    nl_box = (0.55, 0.75, 0.25, 0.45)
    return Scenario(
        name="example1",
        k=17.0,
        A=UniformRandom(0.5, 3.0, collar, 1.0),
        n=UniformRandom(0.5, 1.0, collar, 1.0),
        eps=UniformRandom(0.0, 9.4, nl_box, 0.0),
        source=bump_source(),
        seed=seed,
        nonlinear_box=nl_box,
        collar_box=collar,
    )


# Example 2: incident beam


BEAM_AMPLITUDE = 0.8
BEAM_STEEPNESS = 50.0


def incident_beam(x1, k):
    x1 = np.asarray(x1, dtype=float)
    return BEAM_AMPLITUDE * np.exp(-1j * k * (0.5 * x1 - 0.25)) / (np.cosh(BEAM_STEEPNESS * x1 - 25.0) + 1.0)


def incident_beam_derivatives(x1, k):
    """(u, du/dx1, d2u/dx1^2) of the incident beam, which depends on x1 only."""
    x1 = np.asarray(x1, dtype=float)
    s = BEAM_STEEPNESS * x1 - 25.0
    c, sh = np.cosh(s), np.sinh(s)
    q = 1.0 / (c + 1.0)
    dq = -BEAM_STEEPNESS * sh * q**2
    d2q = -(BEAM_STEEPNESS**2) * (c * (c + 1.0) - 2.0 * sh**2) * q**3
    e = BEAM_AMPLITUDE * np.exp(-1j * k * (0.5 * x1 - 0.25))
    a = -0.5j * k  # d/dx1 of the phase
    u = e * q
    du = e * (dq + a * q)
    d2u = e * (d2q + 2 * a * dq + a * a * q)
    return u, du, d2u


def beam_source(k):
    def f(points):
        _, _, d2u = incident_beam_derivatives(np.atleast_2d(points)[:, 0], k)
        u = incident_beam(np.atleast_2d(points)[:, 0], k)
        return -d2u - k * k * u

    return f


def beam_boundary(k):
    """grad(u_inc).nu + i k u_inc on the boundary; zero at interior points."""

    def g(points):
        pts = np.atleast_2d(points)
        x, y = pts[:, 0], pts[:, 1]
        u, du, _ = incident_beam_derivatives(x, k)
        out = 1j * k * u
        out = np.where(np.isclose(x, 0.0), out - du, out)
        out = np.where(np.isclose(x, 1.0), out + du, out)
        on_bdry = np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1)
        return np.where(on_bdry, out, 0.0)

    return g


EXAMPLE2_BOX = (0.25, 0.75, 0.25, 0.75)


def example2_eps_raster() -> Raster:
    """Default Kerr pattern: 8 x 8 checkerboard of 0.85 / 0 on the inner box."""
    return Raster(checkerboard(8, 0.85, 0.0), EXAMPLE2_BOX, 0.0)


def example2(seed: int = 0, eps_raster: Raster | None = None) -> Scenario:
    k = 30.0
    return Scenario(
        name="example2",
        k=k,
        A=UniformRandom(0.2, 1.0, EXAMPLE2_BOX, 1.0),
        n=Constant(1.0),
        eps=eps_raster if eps_raster is not None else example2_eps_raster(),
        source=beam_source(k),
        boundary=beam_boundary(k),
        seed=seed,
        nonlinear_box=EXAMPLE2_BOX,
        collar_box=EXAMPLE2_BOX,
    )


EXAMPLE3_BOX = (0.15, 0.85, 0.15, 0.85)


def example3_n_raster() -> Raster:
    """Default refractive index: 7 x 7 checkerboard of 1.0 / 0.5 on the inner box."""
    return Raster(checkerboard(7, 1.0, 0.5), EXAMPLE3_BOX, 1.0)


def example3(n_raster: Raster | None = None) -> Scenario:
    return Scenario(
        name="example3",
        k=15.0,
        A=Constant(1.0),
        n=n_raster if n_raster is not None else example3_n_raster(),
        eps=Indicator(0.3, EXAMPLE3_BOX, 0.0),
        source=lambda pts: np.full(len(np.atleast_2d(pts)), 100.0 + 0j),
        nonlinear_box=EXAMPLE3_BOX,
        collar_box=EXAMPLE3_BOX,
    )


SCENARIOS = {"example1": example1, "example2": example2, "example3": example3}


def get_scenario(name: str, seed: int = 0, **kwargs) -> Scenario:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    if name == "example3":
        return example3(**kwargs)
    return SCENARIOS[name](seed, **kwargs)


def build_problem(name: str, H_exp: int, eta_exp: int, h_exp: int, seed: int = 0, **kwargs) -> Problem:
    return get_scenario(name, seed, **kwargs).discretize(build_hierarchy(H_exp, eta_exp, h_exp))
