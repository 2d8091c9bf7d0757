"""Independent reference computations used by several test modules."""

import numpy as np


def q1_basis(xi, eta):
    """Bilinear shape functions and gradients on [0,1]^2, corners (0,0),(1,0),(0,1),(1,1)."""
    vals = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])
    grads = np.array([[-(1 - eta), -(1 - xi)], [1 - eta, -xi], [-eta, 1 - xi], [eta, xi]])
    return vals, grads


def quadrature_blin(n_cells, a, m, k, order=3):
    """Dense matrix of (a grad u, grad v) - (m u, v) + i k (u, v)_boundary by Gauss quadrature.

    Loops over cells and evaluates basis functions at quadrature points; shares
    no code with the assembly module.
    """
    h = 1.0 / n_cells
    g, w = np.polynomial.legendre.leggauss(order)
    g, w = (g + 1) / 2, w / 2
    N = (n_cells + 1) ** 2
    out = np.zeros((N, N), dtype=complex)
    for cy in range(n_cells):
        for cx in range(n_cells):
            c = cy * n_cells + cx
            nodes = [cy * (n_cells + 1) + cx, cy * (n_cells + 1) + cx + 1,
                     (cy + 1) * (n_cells + 1) + cx, (cy + 1) * (n_cells + 1) + cx + 1]
            loc = np.zeros((4, 4))
            for xi, wx in zip(g, w):
                for eta, wy in zip(g, w):
                    v, dv = q1_basis(xi, eta)
                    dv = dv / h
                    loc += wx * wy * h * h * (a[c] * dv @ dv.T - m[c] * np.outer(v, v))
            out[np.ix_(nodes, nodes)] += loc
    # boundary edges
    for i in range(n_cells):
        for pair in ([i, i + 1],
                     [n_cells * (n_cells + 1) + i, n_cells * (n_cells + 1) + i + 1],
                     [i * (n_cells + 1), (i + 1) * (n_cells + 1)],
                     [i * (n_cells + 1) + n_cells, (i + 1) * (n_cells + 1) + n_cells]):
            loc = np.zeros((2, 2))
            for s, ws in zip(g, w):
                v = np.array([1 - s, s])
                loc += ws * h * np.outer(v, v)
            out[np.ix_(pair, pair)] += 1j * k * loc
    return out


def bilinear_eval(n_cells, values, points):
    """Evaluate a nodal Q1 function at points by locating the cell."""
    h = 1.0 / n_cells
    pts = np.atleast_2d(points)
    cx = np.minimum((pts[:, 0] / h).astype(int), n_cells - 1)
    cy = np.minimum((pts[:, 1] / h).astype(int), n_cells - 1)
    xi, eta = pts[:, 0] / h - cx, pts[:, 1] / h - cy
    base = cy * (n_cells + 1) + cx
    v = values
    return ((1 - xi) * (1 - eta) * v[base] + xi * (1 - eta) * v[base + 1]
            + (1 - xi) * eta * v[base + n_cells + 1] + xi * eta * v[base + n_cells + 2])
