"""Heterogeneous permeability fields: raster ingestion, generation, hashing.

A field stores one strictly positive value per fine cell, row y=0 first.
The text raster format is: line 1 ``nx ny``, then ny lines of nx
space-separated decimals.  The writer emits 17 significant digits so that
save/load round-trips bit-exactly.
"""

import hashlib

import numpy as np

__all__ = [
    "FieldFormatError",
    "PermeabilityField",
    "load_raster",
    "save_raster",
    "generate_channels",
    "uniform_field",
]


class FieldFormatError(ValueError):
    """Raised for malformed or invalid raster data."""


class PermeabilityField:
    """Cell-wise positive coefficient with its bounds and contrast."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim != 2:
            raise FieldFormatError(f"field array must be 2-D, got shape {values.shape}")
        bad = np.argwhere(values <= 0.0)
        if bad.size:
            r, c = bad[0]
            raise FieldFormatError(
                f"non-positive permeability {values[r, c]!r} at row {r}, column {c}"
            )
        self.values = values
        self.values.setflags(write=False)

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def gamma(self):
        return float(self.values.min())

    @property
    def beta(self):
        return float(self.values.max())

    @property
    def contrast(self):
        return self.beta / self.gamma

    def cell_values(self):
        """Flat per-cell array in fine-grid cell order (row-major, y first)."""
        return self.values.ravel()

    def check_mesh(self, mesh):
        if (self.nx, self.ny) != (mesh.nx, mesh.ny):
            raise FieldFormatError(
                f"field is {self.nx}x{self.ny} cells but the mesh has {mesh.nx}x{mesh.ny}"
            )

    def content_hash(self):
        """Hash of the canonical raster text; stable across processes."""
        h = hashlib.sha256()
        h.update(f"{self.nx} {self.ny}\n".encode())
        for row in self.values:
            h.update(" ".join(format(v, ".17g") for v in row).encode())
            h.update(b"\n")
        return h.hexdigest()[:16]


def load_raster(path):
    """Read a field from the text raster format, validating every value."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FieldFormatError(f"{path}: header must be 'nx ny', got {header!r}")
        try:
            nx, ny = int(header[0]), int(header[1])
        except ValueError as exc:
            raise FieldFormatError(f"{path}: unparsable header {header!r}") from exc
        rows = []
        for r in range(ny):
            line = fh.readline()
            if not line:
                raise FieldFormatError(f"{path}: expected {ny} rows, file ends at row {r}")
            parts = line.split()
            if len(parts) != nx:
                raise FieldFormatError(
                    f"{path}: row {r} has {len(parts)} values, expected {nx}"
                )
            try:
                vals = np.array([float(p) for p in parts])
            except ValueError as exc:
                raise FieldFormatError(f"{path}: unparsable value in row {r}") from exc
            nonpos = np.flatnonzero(vals <= 0.0)
            if nonpos.size:
                c = int(nonpos[0])
                raise FieldFormatError(
                    f"{path}: non-positive permeability at row {r}, column {c}"
                )
            rows.append(vals)
        extra = fh.readline().split()
        if extra:
            raise FieldFormatError(f"{path}: trailing data after row {ny - 1}")
    return PermeabilityField(np.vstack(rows))


def save_raster(field, path):
    """Write the field in the text raster format (17 significant digits)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{field.nx} {field.ny}\n")
        for row in field.values:
            fh.write(" ".join(format(v, ".17g") for v in row))
            fh.write("\n")


def uniform_field(nx, ny, value=1.0):
    if value <= 0:
        raise FieldFormatError(f"uniform value must be positive, got {value}")
    return PermeabilityField(np.full((ny, nx), float(value)))


def generate_channels(nx, ny, background, channel_value, seed):
    """Deterministic channels-plus-inclusions test field.

    Draws a few gently meandering horizontal channels of the high value over
    a uniform background, then scatters small well-separated rectangular
    inclusions.  Channels drift slowly and inclusions keep their distance so
    that no small neighbourhood sees more than a few distinct high-value
    components.  The same seed always yields the same field.
    """
    if background <= 0 or channel_value <= 0:
        raise FieldFormatError(
            f"background and channel value must be positive, got {background}, {channel_value}"
        )
    rng = np.random.default_rng(seed)
    values = np.full((ny, nx), float(background))
    occupied = np.zeros((ny, nx), dtype=bool)

    n_channels = max(2, ny // 25)
    thickness = 2 if ny >= 20 else 1
    margin = max(2, ny // 25)
    rows = (np.linspace(0.15, 0.85, n_channels) * ny).astype(int)
    rows = rows + rng.integers(-margin, margin + 1, n_channels)
    for r0 in rows:
        y = int(np.clip(r0, 1, ny - thickness - 1))
        for x in range(nx):
            if rng.random() < 0.25:
                y = int(np.clip(y + rng.integers(-1, 2), 1, ny - thickness - 1))
            values[y : y + thickness, x] = channel_value
            y_lo = max(y - 3 * margin, 0)
            occupied[y_lo : y + thickness + 3 * margin, x] = True

    n_blobs = max(3, (nx * ny) // 1000)
    max_size = max(2, min(nx, ny) // 25 + 2)
    placed = 0
    attempts = 0
    while placed < n_blobs and attempts < 60 * n_blobs:
        attempts += 1
        w = int(rng.integers(2, max_size + 1))
        h = int(rng.integers(2, max_size + 1))
        if w >= nx - 2 or h >= ny - 2:
            continue
        x0 = int(rng.integers(1, nx - w))
        y0 = int(rng.integers(1, ny - h))
        pad = 2 * margin
        if occupied[max(y0 - pad, 0) : y0 + h + pad, max(x0 - pad, 0) : x0 + w + pad].any():
            continue
        values[y0 : y0 + h, x0 : x0 + w] = channel_value
        occupied[max(y0 - pad, 0) : y0 + h + pad, max(x0 - pad, 0) : x0 + w + pad] = True
        placed += 1

    return PermeabilityField(values)
