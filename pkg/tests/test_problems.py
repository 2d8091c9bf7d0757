import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kerrlod.mesh import build_hierarchy
from kerrlod.problems import (
    Raster,
    beam_boundary,
    beam_source,
    build_problem,
    bump_source,
    checkerboard,
    get_scenario,
    incident_beam,
    incident_beam_derivatives,
    random_field,
)


@pytest.mark.parametrize("k", [10.0, 30.0])
def test_beam_derivatives_against_finite_differences(k):
    x = np.linspace(0.05, 0.95, 37)
    d = 1e-5
    u, du, d2u = incident_beam_derivatives(x, k)
    assert np.allclose(u, incident_beam(x, k))
    fd1 = (incident_beam(x + d, k) - incident_beam(x - d, k)) / (2 * d)
    fd2 = (incident_beam(x + d, k) - 2 * incident_beam(x, k) + incident_beam(x - d, k)) / d**2
    scale = np.abs(d2u).max()
    assert np.abs(du - fd1).max() < 1e-6 * np.abs(du).max()
    assert np.abs(d2u - fd2).max() < 1e-4 * scale


def test_beam_source_and_boundary_data():
    k = 30.0
    pts = np.array([[0.3, 0.4], [0.5, 0.5]])
    _, _, d2u = incident_beam_derivatives(pts[:, 0], k)
    assert np.allclose(beam_source(k)(pts), -d2u - k * k * incident_beam(pts[:, 0], k))
    g = beam_boundary(k)
    # on x = 0 the outward normal is -e1, on y = 0 the normal derivative vanishes
    u0, du0, _ = incident_beam_derivatives(np.array([0.0]), k)
    assert np.allclose(g(np.array([[0.0, 0.3]])), -du0 + 1j * k * u0)
    ux, _, _ = incident_beam_derivatives(np.array([0.4]), k)
    assert np.allclose(g(np.array([[0.4, 0.0]])), 1j * k * ux)
    assert g(np.array([[0.4, 0.4]]))[0] == 0


def test_bump_source_support():
    f = bump_source()
    pts = np.array([[0.5, 0.5], [0.53, 0.5], [0.56, 0.5]])
    vals = f(pts).real
    assert np.isclose(vals[0], 1e4 * np.exp(-1.0))
    assert 0 < vals[1] < vals[0]
    assert vals[2] == 0


@given(st.integers(0, 1000))
def test_random_fields_reproducible_from_seed(seed):
    hier = build_hierarchy(1, 3, 4)
    a = random_field(0.5, 3.0, hier, seed, box=(0.15, 0.85, 0.15, 0.85))
    b = random_field(0.5, 3.0, hier, seed, box=(0.15, 0.85, 0.15, 0.85))
    assert np.array_equal(a.values, b.values)
    assert a.values.min() >= 0.5 and a.values.max() <= 3.0


def test_streams_are_independent():
    hier = build_hierarchy(1, 3, 3)
    a = random_field(0, 1, hier, 5, stream=0)
    n = random_field(0, 1, hier, 5, stream=1)
    assert not np.allclose(a.values, n.values)


def test_example1_structure():
    p = build_problem("example1", 2, 5, 6, seed=3)
    mids = p.hierarchy.fine.element_midpoints
    h = p.hierarchy.coeff.size
    outside = ~((mids >= 0.15 - h) & (mids <= 0.85 + h)).all(axis=1)
    assert np.all(p.A.values[outside] == 1) and np.all(p.n.values[outside] == 1)
    x, y = mids.T
    off = ~((x > 0.55 - h) & (x < 0.75 + h) & (y > 0.25 - h) & (y < 0.45 + h))
    assert np.all(p.eps.values[off] == 0)
    assert 0 <= p.eps.values.min() and p.eps.values.max() <= 9.4
    assert p.k == 17
    # fields are constant on coefficient cells
    kids = p.hierarchy.coeff_to_fine_elements
    assert np.all(np.ptp(p.A.values[kids], axis=1) == 0)


def test_example2_and_3_ranges():
    p2 = build_problem("example2", 2, 5, 6, seed=1)
    assert set(np.unique(p2.eps.values)) == {0.0, 0.85}
    assert p2.A.values.min() >= 0.2 and p2.k == 30
    p3 = build_problem("example3", 2, 5, 6)
    assert set(np.unique(p3.n.values)) <= {0.5, 1.0}
    assert set(np.unique(p3.eps.values)) == {0.0, 0.3}
    assert np.isclose(p3.load.sum(), 100.0)


def test_raster_roundtrip(tmp_path):
    r = Raster(checkerboard(3, 2.0, 0.5), (0.2, 0.8, 0.2, 0.8), 1.0)
    path = tmp_path / "n.txt"
    r.write(path)
    back = Raster.read(path, r.box, r.outside)
    assert np.array_equal(back.values, r.values)
    (tmp_path / "bad.txt").write_text("3 3\n1 2\n")
    with pytest.raises(ValueError):
        Raster.read(tmp_path / "bad.txt")


def test_raster_orientation():
    vals = np.array([[1.0, 2.0], [3.0, 4.0]])  # row 0 is the bottom strip
    r = Raster(vals)
    assert r.sample(np.array([[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]])).tolist() == [1.0, 2.0, 3.0]


def test_unknown_scenario():
    with pytest.raises(KeyError):
        get_scenario("example9")


def test_linear_variant_and_coarse_switch():
    p = build_problem("example3", 2, 4, 5)
    assert np.all(p.linear().eps.values == 0)
    q = p.with_coarse(3)
    assert q.hierarchy.coarse.cells_per_axis == 8 and q.hierarchy.fine == p.hierarchy.fine
