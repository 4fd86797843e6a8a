import numpy as np
import pytest

from qgdms.grid import GridConfigError, build_hierarchy


def test_paper_scale_counts():
    h = build_hierarchy(100, 100, 10, 10)
    assert h.coarse.H == pytest.approx(np.sqrt(2) / 10, rel=1e-15)
    assert h.fine.h == pytest.approx(np.sqrt(2) / 100, rel=1e-15)
    assert h.coarse.N == 100
    assert h.coarse.N_c == 81
    assert h.fine.n_nodes == 101 * 101


def test_single_element_mesh():
    h = build_hierarchy(2, 2, 1, 1)
    assert h.coarse.N == 1
    assert h.coarse.N_c == 0
    assert h.interior_coarse_nodes.shape == (0, 2)


def test_nesting_arithmetic():
    h = build_hierarchy(40, 40, 5, 5)
    assert h.coarse.N == 25
    assert h.coarse.N_c == 16
    assert h.rx == 8 and h.ry == 8


@pytest.mark.parametrize("args", [(100, 100, 7, 10), (100, 100, 10, 9), (30, 40, 4, 8)])
def test_non_nesting_raises(args):
    with pytest.raises(GridConfigError) as exc:
        build_hierarchy(*args)
    assert "divisible" in str(exc.value)


def test_non_positive_counts_raise():
    with pytest.raises(GridConfigError):
        build_hierarchy(0, 10, 1, 1)
    with pytest.raises(GridConfigError):
        build_hierarchy(10, 10, 10, -1)


def test_oversample_corner_m1():
    h = build_hierarchy(40, 40, 5, 5)
    patch = h.oversample(0, 1)
    assert sorted(patch.elements) == [0, 1, 5, 6]


def test_oversample_center_m1():
    h = build_hierarchy(40, 40, 5, 5)
    patch = h.oversample(12, 1)  # element (2, 2)
    assert patch.elements.size == 9


def test_oversample_saturation():
    h = build_hierarchy(40, 40, 5, 5)
    for i in (0, 7, 24):
        patch = h.oversample(i, 5)
        assert patch.elements.size == h.coarse.N
        assert h.patch_is_domain(patch)
        bigger = h.oversample(i, 9)
        assert np.array_equal(bigger.elements, patch.elements)


def test_oversample_monotone_nesting():
    h = build_hierarchy(40, 40, 5, 5)
    rng = np.random.default_rng(3)
    for i in rng.integers(0, h.coarse.N, 6):
        prev = set()
        for m in range(4):
            cur = set(h.oversample(int(i), m).elements.tolist())
            assert prev <= cur
            prev = cur


def test_m0_patches_partition_domain():
    h = build_hierarchy(12, 12, 3, 3)
    seen = []
    for i in range(h.coarse.N):
        seen.append(h.element_cells(i))
    allc = np.concatenate(seen)
    assert len(allc) == h.fine.n_cells
    assert len(np.unique(allc)) == h.fine.n_cells


def test_negative_m_raises():
    h = build_hierarchy(12, 12, 3, 3)
    with pytest.raises(GridConfigError):
        h.oversample(0, -1)


def test_patch_dof_sets():
    h = build_hierarchy(20, 20, 4, 4)
    patch = h.oversample(0, 1)  # corner patch: 2x2 coarse elements
    fine = h.fine
    # brute force from node coordinates
    in_closure = (fine.node_ix <= 10) & (fine.node_iy <= 10)
    strictly_inside = (
        (fine.node_ix > 0) & (fine.node_ix < 10)
        & (fine.node_iy > 0) & (fine.node_iy < 10)
    )
    assert set(patch.nodes) == set(np.flatnonzero(in_closure))
    assert set(patch.interior_dofs) == set(np.flatnonzero(strictly_inside))
    # interior never touches the domain boundary
    assert not fine.boundary_mask[patch.interior_dofs].any()


def test_element_dofs_drop_domain_boundary():
    h = build_hierarchy(20, 20, 4, 4)
    corner_nodes = h.element_nodes(0)
    corner_dofs = h.element_dofs(0)
    assert len(corner_dofs) < len(corner_nodes)
    assert not h.fine.boundary_mask[corner_dofs].any()
    # interior element keeps its full closure
    assert len(h.element_dofs(5)) == len(h.element_nodes(5))


def test_fine_to_coarse_roundtrip():
    h = build_hierarchy(24, 16, 4, 2)
    fine, coarse = h.fine, h.coarse
    for c in np.random.default_rng(0).integers(0, fine.n_cells, 50):
        cx, cy = c % fine.nx, c // fine.nx
        xc, yc = (cx + 0.5) * fine.hx, (cy + 0.5) * fine.hy
        e = h.fine_cell_coarse[c]
        ex, ey = coarse.element_grid(e)
        assert ex * coarse.Hx <= xc <= (ex + 1) * coarse.Hx
        assert ey * coarse.Hy <= yc <= (ey + 1) * coarse.Hy


def test_interior_coarse_node_neighborhoods():
    h = build_hierarchy(20, 20, 4, 4)
    assert len(h.interior_coarse_nodes) == h.coarse.N_c == 9
    for jx, jy in h.interior_coarse_nodes:
        assert len(h.coarse_node_elements(jx, jy)) == 4
    # boundary coarse node has a clipped neighborhood
    assert len(h.coarse_node_elements(0, 1)) == 2
