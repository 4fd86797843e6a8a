import numpy as np
import pytest

from qgdms.coefficient import (
    FieldFormatError,
    PermeabilityField,
    generate_channels,
    load_raster,
    save_raster,
    uniform_field,
)
from qgdms.grid import FineMesh

FROZEN_REFERENCE_HASH = "d2945ce3e69d0314"


def test_roundtrip_bitexact(tmp_path):
    rng = np.random.default_rng(5)
    values = np.exp(rng.standard_normal((7, 11)) * 3.0)
    field = PermeabilityField(values)
    path = tmp_path / "f.txt"
    save_raster(field, path)
    back = load_raster(path)
    assert np.array_equal(field.values, back.values)
    assert field.content_hash() == back.content_hash()


def test_uniform_field():
    f = uniform_field(4, 4, 1.0)
    assert f.gamma == f.beta == 1.0
    assert f.contrast == 1.0


def test_bounds_bracket_every_sample():
    rng = np.random.default_rng(1)
    f = PermeabilityField(rng.uniform(0.5, 9.0, (6, 6)))
    assert f.gamma <= f.values.min() and f.values.max() <= f.beta


def test_non_positive_value_named(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 2\n1 1 1\n1 0.0 1\n")
    with pytest.raises(FieldFormatError) as exc:
        load_raster(path)
    assert "row 1" in str(exc.value) and "column 1" in str(exc.value)
    assert "non-positive" in str(exc.value)


def test_dimension_mismatch_named(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 2\n1 1 1\n1 1\n")
    with pytest.raises(FieldFormatError) as exc:
        load_raster(path)
    assert "row 1" in str(exc.value)


def test_unparsable_value_named(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2\n1 1\n1 abc\n")
    with pytest.raises(FieldFormatError) as exc:
        load_raster(path)
    assert "row 1" in str(exc.value)


def test_header_and_truncation_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3\n1 1 1\n")
    with pytest.raises(FieldFormatError):
        load_raster(path)
    path.write_text("2 3\n1 1\n1 1\n")
    with pytest.raises(FieldFormatError):
        load_raster(path)
    path.write_text("2 1\n1 1\n1 1\n")
    with pytest.raises(FieldFormatError):
        load_raster(path)


def test_generator_deterministic():
    a = generate_channels(50, 50, 1.0, 1e3, seed=4)
    b = generate_channels(50, 50, 1.0, 1e3, seed=4)
    c = generate_channels(50, 50, 1.0, 1e3, seed=5)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_generator_bounds_paper_scale():
    f = generate_channels(100, 100, 1.0, 1e3, seed=2)
    assert f.gamma == 1.0
    assert f.beta == 1e3
    assert set(np.unique(f.values)) == {1.0, 1e3}


def test_generator_degenerate_homogeneous():
    f = generate_channels(4, 4, 1.0, 1.0, seed=0)
    assert f.contrast == 1.0


def test_generator_contrast_ratio():
    f = generate_channels(10, 10, 2.0, 200.0, seed=3)
    assert f.contrast == pytest.approx(100.0)


def test_generator_rejects_nonpositive():
    with pytest.raises(FieldFormatError):
        generate_channels(8, 8, 0.0, 1.0, seed=0)
    with pytest.raises(FieldFormatError):
        generate_channels(8, 8, 1.0, -2.0, seed=0)


def test_committed_reference_raster(paper_field):
    assert (paper_field.nx, paper_field.ny) == (100, 100)
    assert paper_field.gamma == 1.0
    assert paper_field.beta == 1e3
    assert paper_field.contrast == pytest.approx(1e3)
    assert paper_field.content_hash() == FROZEN_REFERENCE_HASH


def test_mesh_check():
    f = uniform_field(8, 8)
    f.check_mesh(FineMesh(8, 8))
    with pytest.raises(FieldFormatError):
        f.check_mesh(FineMesh(8, 10))


def test_values_are_readonly():
    f = uniform_field(4, 4)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0
