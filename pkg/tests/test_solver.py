import csv
import dataclasses

import numpy as np
import pytest

from kerrlod.fem import CoefficientField, energy_norm
from kerrlod.mesh import build_hierarchy
from kerrlod.problems import build_problem, get_scenario
from kerrlod.solver import (
    IterationConfig,
    energy_error,
    read_field,
    solve_adaptive_lod,
    solve_fem,
    solve_fine_reference,
    write_field,
)


@pytest.fixture(scope="module")
def small():
    return build_problem("example3", 2, 3, 5)


def test_energy_error_examples(small):
    u = np.random.default_rng(0).normal(size=small.hierarchy.fine.num_nodes) + 0j
    assert energy_error(u, u, 3.0) == (0.0, 0.0)
    assert np.isclose(energy_error(u, 0 * u, 3.0)[1], 1.0)
    assert np.isclose(energy_error(u, 2 * u, 3.0)[1], 1.0)
    with pytest.raises(ValueError):
        energy_error(0 * u, u, 3.0)


def test_config_validation():
    with pytest.raises(ValueError):
        IterationConfig(max_iters=0)
    with pytest.raises(ValueError):
        IterationConfig(residual_tol=0)
    with pytest.raises(ValueError):
        IterationConfig(update="sometimes")
    with pytest.raises(ValueError):
        IterationConfig(tol_mode="absolute")


def test_linear_reference_in_one_iteration(small):
    u, rep = solve_fine_reference(small.linear())
    assert rep.converged and rep.iterations == 1


def test_reference_converges_on_small_example(small):
    u, rep = solve_fine_reference(small, IterationConfig(max_iters=80))
    assert rep.converged
    assert rep.residuals[-1] <= 1e-12


def test_strong_nonlinearity_reported_not_raised(small):
    strong = dataclasses.replace(small, eps=small.eps * 1e4)
    u, rep = solve_fine_reference(strong, IterationConfig(max_iters=15))
    assert not rep.converged
    assert rep.message


def test_linear_lod_second_iteration_repeats_first(small):
    its, rep = solve_adaptive_lod(small.linear(), IterationConfig(max_iters=2, residual_tol=1e-300))
    assert np.array_equal(its[0], its[1])
    assert rep.records[1].updated == 0 and rep.records[1].max_indicator == 0


def test_updated_fraction_starts_at_one(small):
    _, rep = solve_adaptive_lod(small, IterationConfig(max_iters=3))
    assert rep.records[0].updated_fraction == 1.0
    assert all(0 <= r.updated_fraction <= 1 for r in rep.records)


def test_update_modes(small):
    cfg = IterationConfig(max_iters=4, residual_tol=1e-300)
    _, never = solve_adaptive_lod(small, dataclasses.replace(cfg, update="never"))
    _, always = solve_adaptive_lod(small, dataclasses.replace(cfg, update="always"))
    assert [r.updated for r in never.records] == [16, 0, 0, 0]
    assert [r.updated for r in always.records] == [16] * 4


def test_tolerance_extremes_are_bit_identical(small):
    cfg = IterationConfig(max_iters=4, residual_tol=1e-300, tol_mode="fixed")
    a, _ = solve_adaptive_lod(small, dataclasses.replace(cfg, tol=0.0))
    b, _ = solve_adaptive_lod(small, dataclasses.replace(cfg, update="always"))
    c, _ = solve_adaptive_lod(small, dataclasses.replace(cfg, tol=np.inf))
    d, _ = solve_adaptive_lod(small, dataclasses.replace(cfg, update="never"))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.array_equal(x, y) for x, y in zip(c, d))


def test_determinism(small):
    cfg = IterationConfig(max_iters=3)
    a, ra = solve_adaptive_lod(small, cfg)
    b, rb = solve_adaptive_lod(small, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.array_equal(x, y) for x, y in zip(ra.marked, rb.marked))


def test_parallel_matches_serial(small):
    a, _ = solve_adaptive_lod(small, IterationConfig(max_iters=3, workers=1))
    b, _ = solve_adaptive_lod(small, IterationConfig(max_iters=3, workers=2))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_fixed_point_consistency():
    # H = 1/8 resolves k = 15; on H = 1/4 the coarse iteration oscillates
    small = build_problem("example3", 3, 3, 5)
    its, rep = solve_adaptive_lod(small, IterationConfig(max_iters=60, tol=0, tol_mode="fixed"))
    assert rep.converged
    m = rep.iterations
    more, _ = solve_adaptive_lod(small, IterationConfig(max_iters=m + 1, tol=0, tol_mode="fixed", residual_tol=1e-300))
    assert energy_norm(more[m] - more[m - 1], small.k) <= 1e-8


def test_one_level_lod_reproduces_reference():
    prob = build_problem("example3", 3, 3, 3)
    refs = []
    for m in range(1, 5):
        u, _ = solve_fine_reference(prob, IterationConfig(max_iters=m, residual_tol=1e-300))
        refs.append(u)
    its, _ = solve_adaptive_lod(prob, IterationConfig(max_iters=4, residual_tol=1e-300))
    for u, v in zip(refs, its):
        assert np.abs(u - v).max() <= 1e-10 * np.abs(u).max()


def test_fem_baseline_linear_single_iteration(small):
    _, rep = solve_fem(small.linear(), IterationConfig(max_iters=5))
    assert rep.iterations == 1 and rep.converged
    assert rep.records[0].updated == 0


def test_errors_recorded_against_reference(small):
    u, _ = solve_fine_reference(small, IterationConfig(max_iters=80))
    _, rep = solve_adaptive_lod(small, IterationConfig(max_iters=3), reference=u)
    assert np.all(np.isfinite(rep.rel_errors))
    assert rep.min_rel_error <= rep.rel_errors[0]


def test_report_csv_roundtrip(small, tmp_path):
    _, rep = solve_adaptive_lod(small, IterationConfig(max_iters=3))
    path = tmp_path / "r.csv"
    rep.to_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == rep.iterations
    for row, rec in zip(rows, rep.records):
        for key, val in dataclasses.asdict(rec).items():
            back = float(row[key])
            assert back == val or (np.isnan(back) and np.isnan(val))


def test_field_dump_roundtrip(small, tmp_path):
    v = np.random.default_rng(0).normal(size=(small.hierarchy.fine.num_nodes, 2)) @ [1, 1j]
    write_field(tmp_path / "f.txt", small.hierarchy.fine, v)
    assert np.array_equal(read_field(tmp_path / "f.txt"), v)
