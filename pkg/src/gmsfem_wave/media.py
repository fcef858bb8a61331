"""Cellwise-constant coefficient fields and the raster file format.

A raster is a headerless little-endian float64 array stored row by row,
bottom row first (row index = y cell index), plus a sidecar text header
``<stem>.hdr`` with ``nx``, ``ny`` and ``extent`` lines.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

__all__ = [
    "CoefficientField",
    "load_raster",
    "save_raster",
    "read_raster",
    "synth_periodic_inclusions",
    "constant_field",
    "media_from_spec",
]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Value of ``a`` on every fine cell (cell ordering of :class:`FineMesh`)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise DataError("coefficient field contains non-finite values")
        bad = np.flatnonzero(v <= 0)
        if bad.size:
            raise DataError(f"coefficient must be positive; cell {bad[0]} has {v[bad[0]]!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def a0(self):
        return float(self.values.min())

    @property
    def a1(self):
        return float(self.values.max())

    def check(self, fine):
        if self.values.size != fine.n_cells:
            raise ConfigurationError(
                f"field has {self.values.size} cells, mesh has {fine.n_cells}")
        return self


def _header_path(path):
    return Path(path).with_suffix(".hdr")


def save_raster(path, values, nx, ny, extent=(1.0, 1.0)):
    """Write a raster and its header; ``values`` has ``nx * ny`` entries."""
    values = np.asarray(values, dtype="<f8").ravel()
    if values.size != nx * ny:
        raise ConfigurationError(f"{values.size} values do not fill a {nx}x{ny} raster")
    if np.isscalar(extent):
        extent = (extent, extent)
    path = Path(path)
    path.write_bytes(values.tobytes())
    _header_path(path).write_text(
        f"nx = {nx}\nny = {ny}\nextent = {float(extent[0])!r} {float(extent[1])!r}\n")


def read_raster(path):
    """Return ``(values[ny, nx], extent)``."""
    path = Path(path)
    hdr = {}
    for line in _header_path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            hdr[k.strip()] = v.split()
    try:
        nx, ny = int(hdr["nx"][0]), int(hdr["ny"][0])
        extent = tuple(float(x) for x in hdr.get("extent", ["1.0", "1.0"]))
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed raster header for {path}") from exc
    data = np.fromfile(path, dtype="<f8")
    if data.size != nx * ny:
        raise DataError(f"{path}: header says {nx}x{ny}, file holds {data.size} values")
    return data.reshape(ny, nx), extent


def load_raster(path, fine):
    """Load a raster onto the fine mesh.

    A raster finer than the mesh by an integer factor per axis is sampled at
    fine-cell midpoints.
    """
    data, _ = read_raster(path)
    ry, rx = data.shape
    if rx % fine.nx or ry % fine.ny:
        raise ConfigurationError(
            f"raster {rx}x{ry} does not map onto a {fine.nx}x{fine.ny} mesh")
    kx, ky = rx // fine.nx, ry // fine.ny
    sampled = data[ky // 2::ky, kx // 2::kx]
    bad = np.argwhere(~(sampled > 0))
    if bad.size:
        j, i = bad[0]
        raise DataError(f"non-positive coefficient {sampled[j, i]!r} at cell ({i}, {j})")
    return CoefficientField(sampled.ravel())


def constant_field(fine, value=1.0):
    return CoefficientField(np.full(fine.n_cells, float(value)))


def synth_periodic_inclusions(fine, background=1.0, contrast=100.0, period=8):
    """Square inclusions of value ``contrast * background`` repeating every
    ``period`` cells; each inclusion is ``period // 2`` cells wide and offset
    by ``period // 4`` from the start of its period cell."""
    if contrast < 1:
        raise ConfigurationError(f"contrast must be >= 1, got {contrast}")
    if period < 2:
        raise ConfigurationError(f"period must be >= 2 cells, got {period}")
    if background <= 0:
        raise ConfigurationError(f"background must be positive, got {background}")
    width, offset = period // 2, period // 4
    inside_x = (np.arange(fine.nx) - offset) % period < width
    inside_y = (np.arange(fine.ny) - offset) % period < width
    mask = inside_y[:, None] & inside_x[None, :]
    vals = np.where(mask, contrast * background, background)
    return CoefficientField(vals.ravel())


def media_from_spec(spec, fine):
    """Resolve a ``--media`` argument.

    Accepted forms: a raster path, ``synth:periodic:<bg>:<contrast>:<period>``
    and ``const:<value>``.
    """
    spec = str(spec)
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) != 5 or parts[1] != "periodic":
            raise ConfigurationError(f"bad synthetic media spec {spec!r}")
        return synth_periodic_inclusions(fine, float(parts[2]), float(parts[3]), int(parts[4]))
    if spec.startswith("const:"):
        return constant_field(fine, float(spec.split(":", 1)[1]))
    if not Path(spec).exists():
        raise ConfigurationError(f"media file {spec!r} does not exist")
    return load_raster(spec, fine)
