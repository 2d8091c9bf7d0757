import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kerrlod.fem import prolongation_matrix, unit_matrices
from kerrlod.interpolation import build_IH, kernel_basis_constraints, local_projection
from kerrlod.mesh import MeshLevel, build_hierarchy


@pytest.mark.parametrize("exps", [(1, 1, 3), (2, 3, 5), (3, 3, 5), (2, 2, 2)])
def test_projection_property_is_exact(exps):
    hier = build_hierarchy(*exps)
    op = build_IH(hier)
    I = (op.matrix @ op.prolongation).toarray()
    assert np.max(np.abs(I - np.eye(hier.coarse.num_nodes))) <= 1e-12


def test_idempotent_on_fine_functions(small_hier, rng):
    op = build_IH(small_hier)
    v = rng.normal(size=small_hier.fine.num_nodes)
    once = op.prolongation @ op(v)
    assert np.allclose(op.prolongation @ op(once), once, atol=1e-12)


@given(st.sampled_from([1, 2, 4, 8]))
def test_local_projection_is_l2_projection(r):
    h = 1.0 / r
    L = local_projection(r, h)
    P = prolongation_matrix(MeshLevel(1), MeshLevel(r)).toarray()
    assert np.allclose(L @ P, np.eye(4))
    # residual is mass-orthogonal to Q1 on the element
    _, M = unit_matrices(MeshLevel(r))
    v = np.random.default_rng(r).normal(size=(r + 1) ** 2)
    res = v - P @ (L @ v)
    assert np.allclose(P.T @ M.toarray() @ res, 0, atol=1e-14)


def test_vertex_averaging_weights():
    hier = build_hierarchy(2, 2, 4)
    op = build_IH(hier)
    # each coarse row sums to one on constants (constants are reproduced)
    assert np.allclose(op.matrix @ np.ones(hier.fine.num_nodes), 1.0)


def _sample_constants(hier, samples=40, seed=0):
    op = build_IH(hier)
    S, M = unit_matrices(hier.fine)
    Sc, _ = unit_matrices(hier.coarse)
    rng = np.random.default_rng(seed)
    xy = hier.fine.node_coords
    stab, approx = [], []
    for _ in range(samples):
        kx, ky = rng.integers(1, 6, size=2)
        smooth = np.sin(np.pi * kx * xy[:, 0] + rng.uniform(0, 6)) * np.cos(np.pi * ky * xy[:, 1])
        v = smooth + 0.1 * rng.normal(size=len(xy))
        semi = np.sqrt(v @ S @ v)
        vc = op(v)
        stab.append(np.sqrt(vc @ Sc @ vc) / semi)
        e = v - op.prolongation @ vc
        approx.append(np.sqrt(e @ M @ e) / (hier.coarse.size * semi))
    return max(stab), max(approx)


def test_stability_and_approximation_constants_bounded():
    consts = [_sample_constants(build_hierarchy(He, He, He + 2)) for He in (2, 3, 4)]
    stab, approx = np.array(consts).T
    assert np.all(stab < 5) and np.all(approx < 5)
    # no growth under refinement
    assert np.all(stab[1:] <= 1.5 * stab[:-1])
    assert np.all(approx[1:] <= 1.5 * approx[:-1])


def test_kernel_constraints_restrict_to_patch(small_hier):
    op = build_IH(small_hier)
    p = small_hier.patch(5, 1)
    C = kernel_basis_constraints(op, p)
    assert C.shape == (len(p.coarse_nodes), p.num_fine_nodes)
    # a function supported in the patch interior: constraint rows reproduce I_H
    v = np.zeros(small_hier.fine.num_nodes)
    inner = p.fine_nodes[~p.interior_mask]
    v[inner] = np.random.default_rng(0).normal(size=len(inner))
    v[p.fine_nodes[p.interior_mask]] = 0
    assert np.allclose(C @ v[p.fine_nodes], op(v)[p.coarse_nodes])
