"""Q1 bilinear finite elements on the structured fine grid.

Element integrals are analytic for cell-constant coefficients, so assembly
carries no quadrature error.  Local node order everywhere is
(0,0), (1,0), (0,1), (1,1).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

__all__ = [
    "AssemblyError",
    "SymmetricSparseOperator",
    "q1_stiffness",
    "q1_mass",
    "assemble_stiffness",
    "assemble_mass",
    "cell_average_gradients",
    "PartitionOfUnity",
    "build_partition_of_unity",
    "cell_load_vector",
]


class AssemblyError(ValueError):
    pass


def q1_stiffness(hx, hy):
    """Exact 4x4 element stiffness for unit coefficient on an hx-by-hy cell."""
    kxx = np.array(
        [[2, -2, 1, -1], [-2, 2, -1, 1], [1, -1, 2, -2], [-1, 1, -2, 2]], dtype=float
    ) / 6.0
    kyy = np.array(
        [[2, 1, -2, -1], [1, 2, -1, -2], [-2, -1, 2, 1], [-1, -2, 1, 2]], dtype=float
    ) / 6.0
    return (hy / hx) * kxx + (hx / hy) * kyy


def q1_mass(hx, hy):
    """Exact 4x4 consistent mass for unit weight on an hx-by-hy cell."""
    m = np.array(
        [[4, 2, 2, 1], [2, 4, 1, 2], [2, 1, 4, 2], [1, 2, 2, 4]], dtype=float
    )
    return (hx * hy / 36.0) * m


@dataclass
class SymmetricSparseOperator:
    """Sparse symmetric bilinear form, optionally restricted to a DOF set."""

    matrix: sparse.csr_matrix
    tag: str
    dofs: np.ndarray | None = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def quadratic(self, u, v=None):
        v = u if v is None else v
        return float(u @ (self.matrix @ v))

    def dump_coo(self, path):
        """Text dump 'row col value', sorted row-major, for cross-diffing."""
        coo = sparse.coo_matrix(self.matrix)
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# {self.tag} {self.n}x{self.n}\n")
            for k in order:
                fh.write(f"{coo.row[k]} {coo.col[k]} {format(coo.data[k], '.17g')}\n")


def _assemble(mesh, elem, cell_weights, cells):
    conn = mesh.cells_nodes if cells is None else mesh.cells_nodes[cells]
    w = cell_weights if cells is None else cell_weights[cells]
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    data = (w[:, None] * elem.ravel()[None, :]).ravel()
    mat = sparse.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return mat.tocsr()


def _restrict(matrix, dofs):
    if dofs is None:
        return matrix
    if len(dofs) == 0:
        raise AssemblyError("empty DOF set")
    return matrix[dofs][:, dofs]


def assemble_stiffness(mesh, kappa_cells, dof_set=None, cells=None):
    """kappa-weighted stiffness; rows/columns limited to dof_set if given."""
    kappa_cells = np.asarray(kappa_cells, dtype=float)
    mat = _assemble(mesh, q1_stiffness(mesh.hx, mesh.hy), kappa_cells, cells)
    return SymmetricSparseOperator(_restrict(mat, dof_set), "stiffness_a", dof_set)


def assemble_mass(mesh, weight=None, dof_set=None, cells=None, tag="mass_l2"):
    """Consistent (non-lumped) mass with a cell-wise weight (default 1)."""
    if weight is None:
        weight = np.ones(mesh.n_cells)
    weight = np.asarray(weight, dtype=float)
    used = weight if cells is None else weight[cells]
    if np.any(used < 0):
        c = int(np.flatnonzero(used < 0)[0])
        raise AssemblyError(f"negative mass weight at cell {c}")
    mat = _assemble(mesh, q1_mass(mesh.hx, mesh.hy), weight, cells)
    return SymmetricSparseOperator(_restrict(mat, dof_set), tag, dof_set)


def cell_average_gradients(mesh, nodal, cells=None):
    """Cell-averaged gradient components of a Q1 nodal function."""
    conn = mesh.cells_nodes if cells is None else mesh.cells_nodes[cells]
    v00 = nodal[conn[:, 0]]
    v10 = nodal[conn[:, 1]]
    v01 = nodal[conn[:, 2]]
    v11 = nodal[conn[:, 3]]
    gx = ((v10 - v00) + (v11 - v01)) / (2.0 * mesh.hx)
    gy = ((v01 - v00) + (v11 - v10)) / (2.0 * mesh.hy)
    return gx, gy


def cell_load_vector(mesh, cell_values):
    """Load vector of a cell-constant source: b_i = sum_c f_c * |c|/4."""
    contrib = np.asarray(cell_values, dtype=float) * (mesh.hx * mesh.hy / 4.0)
    b = np.zeros(mesh.n_nodes)
    for k in range(4):
        np.add.at(b, mesh.cells_nodes[:, k], contrib)
    return b


class PartitionOfUnity:
    """Per-coarse-node functions chi_j and the derived weight field.

    Only interior coarse nodes carry a chi, so the sum is one away from the
    boundary layer of coarse cells and smaller inside it.  The weight is
    kappa_tilde(cell) = sum_j kappa(cell) * |grad chi_j|^2(cell) with
    cell-averaged gradients.
    """

    def __init__(self, kind, chi, kappa_tilde, coarse_nodes):
        self.kind = kind
        self.chi = chi  # csr, one row per interior coarse node
        self.kappa_tilde = kappa_tilde
        self.coarse_nodes = coarse_nodes

    @property
    def n_functions(self):
        return self.chi.shape[0]


def _hat_values(hier, jx, jy):
    """Bilinear hat of coarse node (jx, jy) sampled on its fine window."""
    fine, coarse = hier.fine, hier.coarse
    ix = np.arange((jx - 1) * hier.rx, (jx + 1) * hier.rx + 1)
    iy = np.arange((jy - 1) * hier.ry, (jy + 1) * hier.ry + 1)
    tx = 1.0 - np.abs(ix * fine.hx - jx * coarse.Hx) / coarse.Hx
    ty = 1.0 - np.abs(iy * fine.hy - jy * coarse.Hy) / coarse.Hy
    vals = ty[:, None] * tx[None, :]
    nodes = (iy[:, None] * (fine.nx + 1) + ix[None, :]).ravel()
    return nodes, vals.ravel()


def _msfem_values(hier, kappa_cells, jx, jy, elem_cache):
    """Harmonic extension of the hat boundary data, element by element."""
    fine = hier.fine
    nodes, vals = _hat_values(hier, jx, jy)
    chi = np.zeros(fine.n_nodes)
    chi[nodes] = vals  # boundary data and a bilinear initial fill
    for e in hier.coarse_node_elements(jx, jy):
        enodes = hier.element_nodes(e)
        if e not in elem_cache:
            a_loc = assemble_stiffness(fine, kappa_cells, cells=hier.element_cells(e))
            elem_cache[e] = a_loc.matrix[enodes][:, enodes].toarray()
        a_e = elem_cache[e]
        ex, ey = hier.coarse.element_grid(e)
        lx = fine.node_ix[enodes] - ex * hier.rx
        ly = fine.node_iy[enodes] - ey * hier.ry
        inner = (lx > 0) & (lx < hier.rx) & (ly > 0) & (ly < hier.ry)
        if not inner.any():
            continue
        g = chi[enodes]
        rhs = -a_e[np.ix_(inner, ~inner)] @ g[~inner]
        g[inner] = np.linalg.solve(a_e[np.ix_(inner, inner)], rhs)
        chi[enodes] = g
    return chi[nodes].copy(), nodes


def build_partition_of_unity(hier, field, kind="bilinear"):
    """chi_j for every interior coarse node plus the weight kappa_tilde.

    kind="bilinear" samples coarse hat functions; kind="msfem" solves the
    local cell-wise conduction problem with the hat trace as boundary data
    (the two agree for constant kappa on rectangles).
    """
    if kind not in ("bilinear", "msfem"):
        raise AssemblyError(f"unknown partition-of-unity kind {kind!r}")
    field.check_mesh(hier.fine)
    fine = hier.fine
    kappa = field.cell_values()
    nodes_list, vals_list = [], []
    elem_cache = {}
    for jx, jy in hier.interior_coarse_nodes:
        if kind == "bilinear":
            nodes, vals = _hat_values(hier, jx, jy)
        else:
            vals, nodes = _msfem_values(hier, kappa, jx, jy, elem_cache)
        nodes_list.append(nodes)
        vals_list.append(vals)

    n_funcs = len(nodes_list)
    indptr = np.zeros(n_funcs + 1, dtype=int)
    if n_funcs:
        indptr[1:] = np.cumsum([len(n) for n in nodes_list])
        chi = sparse.csr_matrix(
            (np.concatenate(vals_list), np.concatenate(nodes_list), indptr),
            shape=(n_funcs, fine.n_nodes),
        )
    else:
        chi = sparse.csr_matrix((0, fine.n_nodes))

    kt = np.zeros(fine.n_cells)
    for k, (jx, jy) in enumerate(hier.interior_coarse_nodes):
        cells = fine.cell_window(
            (jx - 1) * hier.rx, (jx + 1) * hier.rx - 1,
            (jy - 1) * hier.ry, (jy + 1) * hier.ry - 1,
        )
        dense = np.zeros(fine.n_nodes)
        row = chi.getrow(k)
        dense[row.indices] = row.data
        gx, gy = cell_average_gradients(fine, dense, cells)
        kt[cells] += kappa[cells] * (gx * gx + gy * gy)

    return PartitionOfUnity(kind, chi, kt, hier.interior_coarse_nodes.copy())
