"""Independent verification paths used by the tests.

Everything here deliberately avoids the element matrices and solvers of the
package: quadrature loops evaluate Q1 fields directly from nodal values,
and the eigenvalue cross-check is a shift-inverted power iteration.
"""

import numpy as np


def _gauss01(n):
    pts, wts = np.polynomial.legendre.leggauss(n)
    return (pts + 1.0) / 2.0, wts / 2.0


def gauss_energy(mesh, kappa_cells, nodal, ngauss=3):
    """integral of kappa |grad v|^2 for a Q1 nodal field, by tensor Gauss."""
    pts, wts = _gauss01(ngauss)
    conn = mesh.cells_nodes
    v00, v10, v01, v11 = (nodal[conn[:, k]] for k in range(4))
    total = 0.0
    for sx, wx in zip(pts, wts):
        for sy, wy in zip(pts, wts):
            dvdx = ((v10 - v00) * (1 - sy) + (v11 - v01) * sy) / mesh.hx
            dvdy = ((v01 - v00) * (1 - sx) + (v11 - v10) * sx) / mesh.hy
            total += wx * wy * mesh.hx * mesh.hy * np.sum(
                kappa_cells * (dvdx * dvdx + dvdy * dvdy)
            )
    return float(total)


def gauss_mass(mesh, weight_cells, nodal, ngauss=3):
    """integral of w v^2 for a Q1 nodal field, by tensor Gauss."""
    pts, wts = _gauss01(ngauss)
    conn = mesh.cells_nodes
    v00, v10, v01, v11 = (nodal[conn[:, k]] for k in range(4))
    total = 0.0
    for sx, wx in zip(pts, wts):
        for sy, wy in zip(pts, wts):
            v = (
                v00 * (1 - sx) * (1 - sy)
                + v10 * sx * (1 - sy)
                + v01 * (1 - sx) * sy
                + v11 * sx * sy
            )
            total += wx * wy * mesh.hx * mesh.hy * np.sum(weight_cells * v * v)
    return float(total)


def inverse_power_smallest(A, S, k, iters=600, shift=None, seed=0):
    """Smallest k generalized eigenvalues of (A, S) by shift-inverted power
    iteration with S-orthogonal deflation.  Dense, for small problems."""
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    n = A.shape[0]
    if shift is None:
        shift = 1e-3 * np.trace(A) / max(np.trace(S), 1e-300)
    B = np.linalg.inv(A + shift * S)
    rng = np.random.default_rng(seed)
    found = []
    vals = []
    for _ in range(k):
        x = rng.standard_normal(n)
        for _ in range(iters):
            for f in found:
                x -= f * (f @ (S @ x))
            x = B @ (S @ x)
            x /= np.sqrt(max(x @ (S @ x), 1e-300))
        lam = float(x @ (A @ x))
        found.append(x)
        vals.append(lam)
    return np.array(sorted(vals))


def manufactured_time_profile(alpha, lam, t):
    """Closed-form g(t) with alpha*g'' + g' + lam*g = 2t + 2*alpha + 2*pi^2*t^2
    and g(0) = g'(0) = 0.

    This is the exact semi-discrete amplitude of the separable solution when
    the spatial profile is a discrete eigenvector of eigenvalue lam.
    """
    a = 2.0 * np.pi**2 / lam
    b = (2.0 - 2.0 * a) / lam
    c = (2.0 * alpha - 2.0 * alpha * a - b) / lam
    disc = np.sqrt(complex(1.0 - 4.0 * alpha * lam))
    s_plus = (-1.0 + disc) / (2.0 * alpha)
    s_minus = (-1.0 - disc) / (2.0 * alpha)
    # g(0) = c + A + B = 0 ; g'(0) = b + A s+ + B s- = 0
    mat = np.array([[1.0, 1.0], [s_plus, s_minus]])
    rhs = np.array([-c, -b])
    coef = np.linalg.solve(mat, rhs.astype(complex))
    g = (
        a * t * t + b * t + c
        + coef[0] * np.exp(s_plus * t)
        + coef[1] * np.exp(s_minus * t)
    )
    return float(np.real(g))
