"""Equiangular longitude/latitude lattice and per-gridpoint cell polygons.

Conventions (shared by every module that touches gridded data):

* latitude axis is inclusive of both poles, ascending, index 0 at -90;
* longitude axis starts at 0 and wraps from +180 to -180 mid-array, so a
  1.5-degree grid stores [0, 1.5, ..., 178.5, -180, -178.5, ..., -1.5];
* each gridpoint owns the quadrilateral reaching halfway to its
  neighbors; polar rows are clamped at +/-90 and are therefore
  half-height cells.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError


@dataclass(frozen=True)
class EquiangularGrid:
    resolution_deg: float
    n_lat: int
    n_lon: int
    lat_values: np.ndarray = field(repr=False)
    lon_values: np.ndarray = field(repr=False)

    def fingerprint(self) -> str:
        """Stable identity of the grid: resolution plus an axis hash."""
        h = hashlib.sha256()
        h.update(repr(float(self.resolution_deg)).encode())
        h.update(self.lat_values.tobytes())
        h.update(self.lon_values.tobytes())
        return f"equiangular:{self.resolution_deg:g}:{h.hexdigest()[:16]}"

    def lon_index(self, lon_deg: float) -> int:
        """Index of the gridpoint at a longitude (must lie on the lattice)."""
        step = 360.0 / self.n_lon
        idx = round((lon_deg % 360.0) / step) % self.n_lon
        if not np.isclose(self.lon_values[idx] % 360.0, lon_deg % 360.0):
            raise IndexError(f"longitude {lon_deg} is not on the grid")
        return idx


@dataclass(frozen=True)
class CellPolygon:
    """Axis-aligned cell bounds in degrees.

    A cell containing the antimeridian is flagged and spans eastward from
    ``lon_lo`` across the seam to ``lon_hi`` (so lon_lo > lon_hi); use
    ``lon_boxes()`` for the planar two-rectangle representation.
    """

    lon_lo: float
    lon_hi: float
    lat_lo: float
    lat_hi: float
    wraps_antimeridian: bool = False

    def lon_boxes(self) -> list[tuple[float, float]]:
        """Longitude intervals of the cell, split at the +/-180 seam."""
        if not self.wraps_antimeridian:
            return [(self.lon_lo, self.lon_hi)]
        return [(self.lon_lo, 180.0), (-180.0, self.lon_hi)]

    def boxes(self) -> list[tuple[float, float, float, float]]:
        """(lon_lo, lat_lo, lon_hi, lat_hi) rectangles covering the cell."""
        return [(lo, self.lat_lo, hi, self.lat_hi) for lo, hi in self.lon_boxes()]


def build_grid(resolution_deg: float) -> EquiangularGrid:
    """Construct the lattice, rejecting resolutions that do not tile the axes."""
    res = float(resolution_deg)
    if res <= 0:
        raise ResolutionError(f"resolution must be positive, got {res}")
    n_lat_spans = 180.0 / res
    n_lon_f = 360.0 / res
    if abs(n_lat_spans - round(n_lat_spans)) > 1e-9 or abs(n_lon_f - round(n_lon_f)) > 1e-9:
        raise ResolutionError(
            f"resolution {res} does not evenly divide 180 and 360 degrees"
        )
    n_lat = int(round(n_lat_spans)) + 1
    n_lon = int(round(n_lon_f))
    lat_values = np.linspace(-90.0, 90.0, n_lat)
    lon_raw = np.arange(n_lon) * (360.0 / n_lon)
    lon_values = np.where(lon_raw < 180.0, lon_raw, lon_raw - 360.0)
    return EquiangularGrid(
        resolution_deg=res,
        n_lat=n_lat,
        n_lon=n_lon,
        lat_values=lat_values,
        lon_values=lon_values,
    )


def band_of(grid: EquiangularGrid, lat_idx: int):
    """Latitude bounds of a cell row, clamped to the poles."""
    from .geodesy import LatitudeBand

    if not 0 <= lat_idx < grid.n_lat:
        raise IndexError(f"lat_idx {lat_idx} out of range [0, {grid.n_lat})")
    half = grid.resolution_deg / 2.0
    center = float(grid.lat_values[lat_idx])
    return LatitudeBand(max(center - half, -90.0), min(center + half, 90.0))


def cell_polygon(grid: EquiangularGrid, lat_idx: int, lon_idx: int) -> CellPolygon:
    """Quadrilateral owned by a gridpoint: halfway to each neighbor."""
    if not 0 <= lon_idx < grid.n_lon:
        raise IndexError(f"lon_idx {lon_idx} out of range [0, {grid.n_lon})")
    band = band_of(grid, lat_idx)
    half = grid.resolution_deg / 2.0
    center = float(grid.lon_values[lon_idx])
    lon_lo, lon_hi = center - half, center + half
    # Only a cell centered exactly on the seam can spill past -180; its
    # western part belongs east of +180.
    if lon_lo < -180.0:
        return CellPolygon(
            lon_lo=lon_lo + 360.0,
            lon_hi=lon_hi,
            lat_lo=band.lat_lo_deg,
            lat_hi=band.lat_hi_deg,
            wraps_antimeridian=True,
        )
    return CellPolygon(
        lon_lo=lon_lo,
        lon_hi=lon_hi,
        lat_lo=band.lat_lo_deg,
        lat_hi=band.lat_hi_deg,
    )
