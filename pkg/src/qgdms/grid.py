"""Structured fine/coarse rectangular meshes on the unit square.

The fine grid is a tensor-product mesh of nx-by-ny cells on (0,1)^2; the
coarse grid of Nx-by-Ny cells must nest exactly (nx % Nx == 0, ny % Ny == 0).
Node and cell numbering is row-major and deterministic:
node (ix, iy) -> iy*(nx+1)+ix, cell (cx, cy) -> cy*nx+cx.
Mesh sizes h, H follow the cell-diagonal convention (sqrt(2)/n on square
grids).  All objects are immutable after construction and safe to share
across workers.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridConfigError",
    "FineMesh",
    "CoarseMesh",
    "OversamplePatch",
    "GridHierarchy",
    "build_hierarchy",
]


class GridConfigError(ValueError):
    """Raised for non-positive or non-nesting mesh cell counts."""


class FineMesh:
    """Fine tensor-product mesh: nodes, cells and boundary masks."""

    def __init__(self, nx, ny):
        if nx <= 0 or ny <= 0:
            raise GridConfigError(f"fine cell counts must be positive, got ({nx}, {ny})")
        self.nx = int(nx)
        self.ny = int(ny)
        self.hx = 1.0 / self.nx
        self.hy = 1.0 / self.ny
        self.h = float(np.hypot(self.hx, self.hy))
        self.n_nodes = (self.nx + 1) * (self.ny + 1)
        self.n_cells = self.nx * self.ny

        ix = np.tile(np.arange(self.nx + 1), self.ny + 1)
        iy = np.repeat(np.arange(self.ny + 1), self.nx + 1)
        self.node_ix = ix
        self.node_iy = iy
        self.node_x = ix * self.hx
        self.node_y = iy * self.hy
        self.boundary_mask = (ix == 0) | (ix == self.nx) | (iy == 0) | (iy == self.ny)
        self.interior_dofs = np.flatnonzero(~self.boundary_mask)

        # per-cell corner nodes in local order (0,0), (1,0), (0,1), (1,1)
        cx = np.tile(np.arange(self.nx), self.ny)
        cy = np.repeat(np.arange(self.ny), self.nx)
        n00 = cy * (self.nx + 1) + cx
        self.cells_nodes = np.column_stack(
            (n00, n00 + 1, n00 + self.nx + 1, n00 + self.nx + 2)
        )

    def node_index(self, ix, iy):
        return iy * (self.nx + 1) + ix

    def cell_index(self, cx, cy):
        return cy * self.nx + cx

    def node_window(self, ix0, ix1, iy0, iy1):
        """Node indices of the closed index rectangle, row-major."""
        ix = np.arange(ix0, ix1 + 1)
        iy = np.arange(iy0, iy1 + 1)
        return (iy[:, None] * (self.nx + 1) + ix[None, :]).ravel()

    def cell_window(self, cx0, cx1, cy0, cy1):
        cx = np.arange(cx0, cx1 + 1)
        cy = np.arange(cy0, cy1 + 1)
        return (cy[:, None] * self.nx + cx[None, :]).ravel()


class CoarseMesh:
    """Coarse tensor-product mesh; elements are numbered row-major."""

    def __init__(self, Nx, Ny):
        if Nx <= 0 or Ny <= 0:
            raise GridConfigError(f"coarse cell counts must be positive, got ({Nx}, {Ny})")
        self.Nx = int(Nx)
        self.Ny = int(Ny)
        self.Hx = 1.0 / self.Nx
        self.Hy = 1.0 / self.Ny
        self.H = float(np.hypot(self.Hx, self.Hy))
        self.N = self.Nx * self.Ny
        self.N_c = (self.Nx - 1) * (self.Ny - 1)

    def element_grid(self, i):
        return i % self.Nx, i // self.Nx

    def element_index(self, ex, ey):
        return ey * self.Nx + ex


@dataclass(frozen=True)
class OversamplePatch:
    """Coarse element i grown by m layers of touching coarse elements.

    ``nodes`` is the closure of the patch on the fine grid; ``interior_dofs``
    excludes both the patch boundary and the domain boundary.
    """

    element: int
    m: int
    ex0: int
    ex1: int
    ey0: int
    ey1: int
    elements: np.ndarray
    nodes: np.ndarray
    interior_dofs: np.ndarray


class GridHierarchy:
    """Conforming fine/coarse mesh pair plus the derived index sets."""

    def __init__(self, fine, coarse):
        if fine.nx % coarse.Nx != 0:
            raise GridConfigError(
                f"fine nx={fine.nx} is not divisible by coarse Nx={coarse.Nx}"
            )
        if fine.ny % coarse.Ny != 0:
            raise GridConfigError(
                f"fine ny={fine.ny} is not divisible by coarse Ny={coarse.Ny}"
            )
        self.fine = fine
        self.coarse = coarse
        self.rx = fine.nx // coarse.Nx
        self.ry = fine.ny // coarse.Ny

        cx = np.tile(np.arange(fine.nx), fine.ny)
        cy = np.repeat(np.arange(fine.ny), fine.nx)
        self.fine_cell_coarse = (cy // self.ry) * coarse.Nx + (cx // self.rx)

        jx = np.tile(np.arange(1, coarse.Nx), max(coarse.Ny - 1, 0))
        jy = np.repeat(np.arange(1, coarse.Ny), max(coarse.Nx - 1, 0))
        self.interior_coarse_nodes = np.column_stack((jx, jy)) if jx.size else np.empty((0, 2), dtype=int)

    def element_cells(self, i):
        """Fine cell indices inside coarse element i."""
        ex, ey = self.coarse.element_grid(i)
        return self.fine.cell_window(
            ex * self.rx, (ex + 1) * self.rx - 1, ey * self.ry, (ey + 1) * self.ry - 1
        )

    def element_nodes(self, i):
        """Fine node closure of coarse element i, row-major."""
        ex, ey = self.coarse.element_grid(i)
        return self.fine.node_window(
            ex * self.rx, (ex + 1) * self.rx, ey * self.ry, (ey + 1) * self.ry
        )

    def element_dofs(self, i):
        """Element node closure minus the domain boundary."""
        nodes = self.element_nodes(i)
        return nodes[~self.fine.boundary_mask[nodes]]

    def coarse_node_elements(self, jx, jy):
        """Elements sharing coarse node (jx, jy): the neighborhood omega_j."""
        exs = [e for e in (jx - 1, jx) if 0 <= e < self.coarse.Nx]
        eys = [e for e in (jy - 1, jy) if 0 <= e < self.coarse.Ny]
        return np.array(
            [self.coarse.element_index(ex, ey) for ey in eys for ex in exs], dtype=int
        )

    def oversample(self, i, m):
        """Oversampling patch around element i, clipped at the boundary.

        m = 0 gives the element itself; each further layer adds every coarse
        element touching the current patch (Chebyshev distance one on the
        structured grid), so the patch is always an index rectangle.
        """
        if m < 0:
            raise GridConfigError(f"oversampling layer count must be >= 0, got {m}")
        ex, ey = self.coarse.element_grid(i)
        ex0, ex1 = max(ex - m, 0), min(ex + m, self.coarse.Nx - 1)
        ey0, ey1 = max(ey - m, 0), min(ey + m, self.coarse.Ny - 1)
        exs = np.arange(ex0, ex1 + 1)
        eys = np.arange(ey0, ey1 + 1)
        elements = (eys[:, None] * self.coarse.Nx + exs[None, :]).ravel()

        nx0, nx1 = ex0 * self.rx, (ex1 + 1) * self.rx
        ny0, ny1 = ey0 * self.ry, (ey1 + 1) * self.ry
        nodes = self.fine.node_window(nx0, nx1, ny0, ny1)
        # strictly inside the patch rectangle; this also drops any node on
        # the domain boundary since the patch is clipped at it
        inner = self.fine.node_window(nx0 + 1, nx1 - 1, ny0 + 1, ny1 - 1) if nx1 - nx0 >= 2 and ny1 - ny0 >= 2 else np.empty(0, dtype=int)
        return OversamplePatch(
            element=i,
            m=m,
            ex0=ex0,
            ex1=ex1,
            ey0=ey0,
            ey1=ey1,
            elements=elements,
            nodes=nodes,
            interior_dofs=inner,
        )

    def patch_is_domain(self, patch):
        return (
            patch.ex0 == 0
            and patch.ey0 == 0
            and patch.ex1 == self.coarse.Nx - 1
            and patch.ey1 == self.coarse.Ny - 1
        )


def build_hierarchy(nx, ny, Nx, Ny):
    """Build the fine/coarse hierarchy; raises GridConfigError on bad counts."""
    return GridHierarchy(FineMesh(nx, ny), CoarseMesh(Nx, Ny))
