import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qgdms import build_hierarchy, fem, cem, solver
from qgdms.coefficient import generate_channels, load_raster, uniform_field

DATA_RASTER = os.path.join(os.path.dirname(__file__), "..", "data",
                           "kappa_contrast1e3_100x100.txt")


@pytest.fixture(scope="session")
def paper_field():
    return load_raster(DATA_RASTER)


@pytest.fixture(scope="session")
def field40():
    # 40x40 channels-and-inclusions field, contrast 1e3
    return generate_channels(40, 40, 1.0, 1e3, seed=19)


@pytest.fixture(scope="session")
def small_uniform():
    """20x20 fine / 4x4 coarse, kappa == 1, with PoU, aux (ell=2) and ops."""
    hier = build_hierarchy(20, 20, 4, 4)
    field = uniform_field(20, 20, 1.0)
    pou = fem.build_partition_of_unity(hier, field, "bilinear")
    aux = cem.build_auxiliary_space(hier, field, pou, 2)
    ops = solver.assemble_fine_operators(hier, field, pou)
    return hier, field, pou, aux, ops


@pytest.fixture(scope="session")
def small_contrast(field40):
    """40x40 fine / 5x5 coarse on the contrast field, ell=3."""
    hier = build_hierarchy(40, 40, 5, 5)
    pou = fem.build_partition_of_unity(hier, field40, "bilinear")
    aux = cem.build_auxiliary_space(hier, field40, pou, 3)
    ops = solver.assemble_fine_operators(hier, field40, pou)
    return hier, field40, pou, aux, ops
