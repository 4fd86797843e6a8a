"""Spectral auxiliary space and constraint-energy-minimizing multiscale basis.

Per coarse element the generalized eigenproblem  a_i(phi, v) = lambda s_i(phi, v)
is solved on the element's fine nodes (no condition on the element boundary,
zero trace on the domain boundary), with a_i the local kappa-stiffness and
s_i the kappa_tilde-weighted mass.  The lowest eigenvectors span the
auxiliary space; each multiscale basis function minimizes energy plus a
projection penalty on an oversampling patch while reproducing one auxiliary
function under the s-projection.

The auxiliary space is handled as a direct sum of per-element components:
the s-projection maps a fine vector to per-element coefficient blocks, and
s-products of projected quantities are coefficient dot products.  This keeps
the projection exactly idempotent in floating point.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .fem import assemble_mass, assemble_stiffness

__all__ = [
    "CemError",
    "AuxiliarySpace",
    "MultiscaleBasis",
    "DecayReport",
    "build_auxiliary_space",
    "build_multiscale_basis",
    "build_global_basis",
    "measure_decay",
    "decay_factor",
    "export_basis",
]

GLOBAL_DOF_CAP = 100_000


class CemError(RuntimeError):
    pass


@dataclass
class AuxiliarySpace:
    """Per-element eigenpairs and the stacked s-weighted load columns.

    ``eigenvalues[i]`` holds the lowest ell+1 values (the extra one feeds
    Lambda); ``vectors[i]`` the first ell eigenvectors, s_i-orthonormal, on
    ``dofs[i]``.  ``s_basis`` stacks the global columns S_i phi_j^(i) in
    (element, j) order; its transpose is the projection coefficient map.
    """

    ell: int
    dofs: list
    vectors: list
    eigenvalues: list
    s_basis: sparse.csc_matrix
    Lambda: float
    sigma_aux: float

    @property
    def n_elements(self):
        return len(self.dofs)

    @property
    def p(self):
        return self.s_basis.shape[1]

    def column_range(self, i):
        return i * self.ell, (i + 1) * self.ell

    def project_coeffs(self, u):
        """Coefficients of the s-projection, stacked in column order."""
        return self.s_basis.T @ u

    def project_reconstruct(self, u):
        """Fine-grid representative of the s-projection of u."""
        coeffs = self.project_coeffs(u)
        out = np.zeros(self.s_basis.shape[0])
        for i in range(self.n_elements):
            lo, hi = self.column_range(i)
            out[self.dofs[i]] += self.vectors[i] @ coeffs[lo:hi]
        return out


def _element_eigens(hier, kappa, kappa_tilde, i, ell):
    fine = hier.fine
    cells = hier.element_cells(i)
    dofs = hier.element_dofs(i)
    if np.max(kappa_tilde[cells]) <= 0.0:
        raise CemError(f"weighted mass form is singular on element {i} (kappa_tilde == 0)")
    a_loc = assemble_stiffness(fine, kappa, dof_set=dofs, cells=cells)
    s_loc = assemble_mass(fine, kappa_tilde, dof_set=dofs, cells=cells, tag="weighted_mass_s")
    n = len(dofs)
    if ell + 1 > n:
        raise CemError(f"element {i} has {n} DOFs, cannot extract {ell + 1} eigenpairs")
    try:
        w, v = la.eigh(a_loc.matrix.toarray(), s_loc.matrix.toarray(),
                       subset_by_index=(0, ell))
    except la.LinAlgError as exc:
        raise CemError(f"eigenproblem failed on element {i}: {exc}") from exc
    # deterministic sign: first significantly nonzero entry positive
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    s_load = s_loc.matrix @ v[:, :ell]
    return dofs, w, v[:, :ell], s_load


def build_auxiliary_space(hier, field, pou, ell, threads=1):
    """Solve the local spectral problem on every coarse element.

    Keeps ell eigenvectors per element plus the (ell+1)-th eigenvalue, and
    records Lambda (smallest excluded value over elements) and sigma_aux
    (largest included one).
    """
    if ell < 1:
        raise CemError(f"need at least one basis function per element, got ell={ell}")
    field.check_mesh(hier.fine)
    kappa = field.cell_values()
    kt = pou.kappa_tilde
    n_el = hier.coarse.N

    def work(i):
        return _element_eigens(hier, kappa, kt, i, ell)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_el)))
    else:
        results = [work(i) for i in range(n_el)]

    dofs = [r[0] for r in results]
    eigenvalues = [r[1] for r in results]
    vectors = [r[2] for r in results]

    n_nodes = hier.fine.n_nodes
    cols = []
    for i, r in enumerate(results):
        s_load = r[3]
        for j in range(ell):
            cols.append(sparse.csc_matrix(
                (s_load[:, j], (dofs[i], np.zeros(len(dofs[i]), dtype=int))),
                shape=(n_nodes, 1),
            ))
    s_basis = sparse.hstack(cols, format="csc") if cols else sparse.csc_matrix((n_nodes, 0))

    Lambda = float(min(ev[ell] for ev in eigenvalues))
    sigma_aux = float(max(ev[:ell].max() for ev in eigenvalues))
    return AuxiliarySpace(ell, dofs, vectors, eigenvalues, s_basis, Lambda, sigma_aux)


@dataclass
class MultiscaleBasis:
    """Sparse map R from coarse coefficients to fine DOFs plus reduced operators."""

    m: int
    ell: int
    R: sparse.csc_matrix
    A_ms: np.ndarray
    M_ms: np.ndarray
    Lambda: float
    sigma_aux: float
    H: float
    columns: list = dc_field(default_factory=list)  # (element, j) per column
    build_seconds: float = 0.0

    @property
    def p(self):
        return self.R.shape[1]

    def prolong(self, coeffs):
        return self.R @ coeffs


def _reduced_operators(R, a_full, m_full):
    A_ms = (R.T @ (a_full @ R)).toarray()
    M_ms = (R.T @ (m_full @ R)).toarray()
    return A_ms, M_ms


def _patch_solve(hier, aux, a_full, i, m):
    patch = hier.oversample(i, m)
    pdofs = patch.interior_dofs
    a_pp = a_full[pdofs][:, pdofs]
    col_sel = np.concatenate([np.arange(*aux.column_range(e)) for e in patch.elements])
    b_p = aux.s_basis[pdofs][:, col_sel]
    system = (a_pp + b_p @ b_p.T).tocsc()
    lo, hi = aux.column_range(i)
    rhs = np.asarray(aux.s_basis[pdofs][:, lo:hi].todense())
    lu = spla.splu(system)
    sol = lu.solve(rhs)
    return pdofs, sol


def build_multiscale_basis(hier, field, pou, aux, m, threads=1, operators=None):
    """Localized basis: one constrained energy minimization per eigenfunction.

    Each column (i, j) solves, on the interior DOFs of the m-layer patch
    around element i, the SPD system (A_patch + P) psi = S_i phi_j^(i) where
    P penalizes the s-projection onto auxiliary components of patch elements.
    """
    t0 = time.perf_counter()
    a_full, m_full = _full_operators(hier, field, operators)
    n_el = hier.coarse.N

    def work(i):
        return _patch_solve(hier, aux, a_full, i, m)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_el)))
    else:
        results = [work(i) for i in range(n_el)]

    R, columns = _stack_columns(hier, aux, results)
    A_ms, M_ms = _reduced_operators(R, a_full, m_full)
    return MultiscaleBasis(
        m=m, ell=aux.ell, R=R, A_ms=A_ms, M_ms=M_ms,
        Lambda=aux.Lambda, sigma_aux=aux.sigma_aux, H=hier.coarse.H,
        columns=columns, build_seconds=time.perf_counter() - t0,
    )


def build_global_basis(hier, field, pou, aux, operators=None, dof_cap=GLOBAL_DOF_CAP, force=False):
    """Unlocalized basis (patch = whole domain); for diagnostics on small meshes."""
    t0 = time.perf_counter()
    a_full, m_full = _full_operators(hier, field, operators)
    dofs = hier.fine.interior_dofs
    if len(dofs) > dof_cap and not force:
        raise CemError(
            f"global basis needs a dense-cost solve on {len(dofs)} DOFs "
            f"(cap {dof_cap}); pass force=True to override"
        )
    a_ii = a_full[dofs][:, dofs]
    b_i = aux.s_basis[dofs]
    system = (a_ii + b_i @ b_i.T).tocsc()
    lu = spla.splu(system)
    sol = lu.solve(np.asarray(b_i.todense()))
    results = []
    for i in range(hier.coarse.N):
        lo, hi = aux.column_range(i)
        results.append((dofs, sol[:, lo:hi]))
    R, columns = _stack_columns(hier, aux, results)
    A_ms, M_ms = _reduced_operators(R, a_full, m_full)
    basis = MultiscaleBasis(
        m=-1, ell=aux.ell, R=R, A_ms=A_ms, M_ms=M_ms,
        Lambda=aux.Lambda, sigma_aux=aux.sigma_aux, H=hier.coarse.H,
        columns=columns, build_seconds=time.perf_counter() - t0,
    )
    return basis


def _full_operators(hier, field, operators):
    if operators is not None:
        return operators
    field.check_mesh(hier.fine)
    kappa = field.cell_values()
    a_full = assemble_stiffness(hier.fine, kappa).matrix
    m_full = assemble_mass(hier.fine).matrix
    return a_full, m_full


def _stack_columns(hier, aux, results):
    n_nodes = hier.fine.n_nodes
    rows, cols, data = [], [], []
    columns = []
    for i, (pdofs, sol) in enumerate(results):
        for j in range(aux.ell):
            col_idx = len(columns)
            columns.append((i, j))
            rows.append(pdofs)
            cols.append(np.full(len(pdofs), col_idx, dtype=int))
            data.append(sol[:, j])
    R = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, len(columns)),
    ).tocsc()
    return R, columns


def decay_factor(Lambda, m):
    """Predicted localization factor 3(1 + 1/L)(1 + 2(1 + L^{-1/2}))^{1-m}."""
    return 3.0 * (1.0 + 1.0 / Lambda) * (1.0 + 2.0 * (1.0 + Lambda ** -0.5)) ** (1 - m)


@dataclass
class DecayReport:
    m_values: list
    gaps: np.ndarray          # (len(m_values), p) a-norm gaps per basis column
    slopes: np.ndarray        # (p,) log-linear fit slope per column
    predicted: np.ndarray     # (len(m_values),) decay factor at each m
    Lambda: float
    patch_grew: np.ndarray    # (len(m_values), p) True where patch is strictly
                              # larger than at the previous m

    def to_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write("m," + ",".join(f"col{k}" for k in range(self.gaps.shape[1])) + "\n")
            for m, row in zip(self.m_values, self.gaps):
                fh.write(str(m) + "," + ",".join(f"{g:.5e}" for g in row) + "\n")


def measure_decay(hier, field, pou, aux, m_list, threads=1, operators=None):
    """a-norm gap between localized and global basis columns per layer count."""
    a_full, m_full = _full_operators(hier, field, operators)
    ops = (a_full, m_full)
    glo = build_global_basis(hier, field, pou, aux, operators=ops)
    gaps = np.zeros((len(m_list), glo.p))
    grew = np.zeros((len(m_list), glo.p), dtype=bool)
    prev_sizes = np.full(hier.coarse.N, -1)
    for k, m in enumerate(m_list):
        ms = build_multiscale_basis(hier, field, pou, aux, m, threads=threads, operators=ops)
        diff = glo.R - ms.R
        prod = a_full @ diff
        sq = np.asarray(diff.multiply(prod).sum(axis=0)).ravel()
        gaps[k] = np.sqrt(np.maximum(sq, 0.0))
        sizes = np.array([hier.oversample(i, m).elements.size for i in range(hier.coarse.N)])
        for col, (i, _) in enumerate(glo.columns):
            grew[k, col] = sizes[i] > prev_sizes[i]
        prev_sizes = sizes
    logs = np.log(np.maximum(gaps, 1e-300))
    slopes = np.polyfit(np.asarray(m_list, dtype=float), logs, 1)[0]
    predicted = np.array([decay_factor(aux.Lambda, m) for m in m_list])
    return DecayReport(list(m_list), gaps, slopes, predicted, aux.Lambda, grew)


def export_basis(basis, directory, c_inv_emp=None):
    """Coordinate-format dump of R plus a provenance metadata record."""
    import os

    os.makedirs(directory, exist_ok=True)
    coo = sparse.coo_matrix(basis.R)
    order = np.lexsort((coo.col, coo.row))
    with open(os.path.join(directory, "basis_R.coo.txt"), "w", encoding="ascii") as fh:
        fh.write(f"# {basis.R.shape[0]} {basis.R.shape[1]}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {format(coo.data[k], '.17g')}\n")
    meta = {
        "m": basis.m,
        "ell": basis.ell,
        "Lambda": basis.Lambda,
        "sigma_aux": basis.sigma_aux,
        "H": basis.H,
        "p": basis.p,
    }
    if c_inv_emp is not None:
        meta["c_inv_emp"] = c_inv_emp
    with open(os.path.join(directory, "basis_meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
