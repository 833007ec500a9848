"""Surface areas of equiangular grid cells on an oblate spheroid.

Latitude weighting for gridded Earth data usually assumes a spherical
planet.  This module computes exact zone ("band") and cell areas for a
two-parameter oblate spheroid, plus mean-normalized latitude weights for
an equiangular grid under either an oblate or a spherical model.

Grid latitudes are interpreted as geodetic latitude.  The closed-form
zone area below is the integral of the spheroid surface of revolution
with the parametric substitution tan(beta) = (c/a) tan(phi); the tests
check it against adaptive quadrature of that integrand.

All angles cross the API boundary in degrees; internals use radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .grid import EquiangularGrid, band_of, build_grid

SpheroidModel = Literal["oblate", "sphere"]

EARTH_EQUATORIAL_RADIUS_M = 6_378_137.0
EARTH_POLAR_RADIUS_M = 6_356_752.0


@dataclass(frozen=True)
class SpheroidParams:
    """Oblate spheroid defined by equatorial and polar radii in meters."""

    equatorial_radius_m: float = EARTH_EQUATORIAL_RADIUS_M
    polar_radius_m: float = EARTH_POLAR_RADIUS_M

    def __post_init__(self):
        a, c = self.equatorial_radius_m, self.polar_radius_m
        if not (a >= c > 0):
            raise ValueError(
                f"need equatorial_radius_m >= polar_radius_m > 0, got a={a}, c={c}"
            )

    @property
    def is_sphere(self) -> bool:
        return self.equatorial_radius_m == self.polar_radius_m

    def as_sphere(self) -> "SpheroidParams":
        """Degenerate spherical model with radius = the equatorial radius."""
        a = self.equatorial_radius_m
        return SpheroidParams(a, a)


@dataclass(frozen=True)
class LatitudeBand:
    """Geodetic latitude interval, degrees, lat_lo_deg < lat_hi_deg."""

    lat_lo_deg: float
    lat_hi_deg: float

    def __post_init__(self):
        lo, hi = self.lat_lo_deg, self.lat_hi_deg
        if not (-90.0 <= lo < hi <= 90.0):
            raise ValueError(f"need -90 <= lat_lo < lat_hi <= 90, got [{lo}, {hi}]")


@dataclass(frozen=True)
class WeightGrid:
    """Per-cell latitude weights, normalized so the mean weight is 1.

    Weights are constant along the longitude axis; ``weights`` is the full
    (n_lat, n_lon) array for convenience in masked reductions.
    """

    grid_shape: tuple[int, int]
    weights: np.ndarray = field(repr=False)
    model: SpheroidModel = "oblate"

    def __post_init__(self):
        if self.weights.shape != self.grid_shape:
            raise ValueError(
                f"weights shape {self.weights.shape} != grid_shape {self.grid_shape}"
            )

    def row_weights(self) -> np.ndarray:
        """One weight per latitude row."""
        return self.weights[:, 0]


def total_surface_area(params: SpheroidParams) -> float:
    """Closed-form surface area of the oblate spheroid, m^2.

    2*pi*a^2 + pi*c^2/e * ln((1+e)/(1-e)); reduces to 4*pi*a^2 for a sphere.
    """
    a, c = params.equatorial_radius_m, params.polar_radius_m
    if params.is_sphere:
        return 4.0 * math.pi * a * a
    e = math.sqrt(1.0 - (c / a) ** 2)
    return 2.0 * math.pi * a * a + math.pi * c * c / e * math.log((1.0 + e) / (1.0 - e))


def _zone_from_equator(params: SpheroidParams, lat_deg: float) -> float:
    """Signed zone area between the equator and a geodetic latitude.

    Antiderivative of the surface-of-revolution element; differencing two
    evaluations gives the band between two latitudes.
    """
    a, c = params.equatorial_radius_m, params.polar_radius_m
    s = math.sin(math.radians(lat_deg))
    if params.is_sphere:
        return 2.0 * math.pi * a * a * s
    e2 = 1.0 - (c / a) ** 2
    e = math.sqrt(e2)
    return math.pi * c * c * (s / (1.0 - e2 * s * s) + math.atanh(e * s) / e)


def band_area(params: SpheroidParams, band: LatitudeBand) -> float:
    """Area of the full 360-degree zone between two geodetic latitudes, m^2."""
    return _zone_from_equator(params, band.lat_hi_deg) - _zone_from_equator(
        params, band.lat_lo_deg
    )


def cell_area(params: SpheroidParams, band: LatitudeBand, lon_width_deg: float) -> float:
    """Area of one grid cell: the band scaled by its longitude fraction.

    Rotational symmetry makes every cell within a band equal-area.
    """
    if not (0.0 < lon_width_deg <= 360.0):
        raise ValueError(f"lon_width_deg must be in (0, 360], got {lon_width_deg}")
    return band_area(params, band) * (lon_width_deg / 360.0)


def latitude_weights(
    grid: EquiangularGrid,
    params: SpheroidParams | None = None,
    model: SpheroidModel = "oblate",
) -> WeightGrid:
    """Cell areas normalized by the mean cell area, per gridpoint.

    ``model="sphere"`` computes areas on a sphere whose radius is the
    equatorial radius (a = c), which is the conventional spherical
    approximation this package exists to improve on.
    """
    if params is None:
        params = SpheroidParams()
    if model == "sphere":
        params = params.as_sphere()
    elif model != "oblate":
        raise ValueError(f"model must be 'oblate' or 'sphere', got {model!r}")

    row_areas = np.empty(grid.n_lat, dtype=np.float64)
    for i in range(grid.n_lat):
        row_areas[i] = band_area(params, band_of(grid, i)) / grid.n_lon
    weights_row = row_areas / row_areas.mean()
    weights = np.repeat(weights_row[:, None], grid.n_lon, axis=1)
    return WeightGrid(grid_shape=(grid.n_lat, grid.n_lon), weights=weights, model=model)


def polar_overestimate(resolution_deg: float, params: SpheroidParams | None = None) -> float:
    """Percent by which the spherical model inflates the polar cell weight.

    100 * (w_sphere / w_oblate - 1) for the most-poleward cell, both weight
    grids mean-normalized on the same equiangular grid.
    """
    grid = build_grid(resolution_deg)
    w_oblate = latitude_weights(grid, params, model="oblate").row_weights()[-1]
    w_sphere = latitude_weights(grid, params, model="sphere").row_weights()[-1]
    return 100.0 * (w_sphere / w_oblate - 1.0)


def write_weights_csv(weight_grid: WeightGrid, grid: EquiangularGrid, path) -> None:
    """Weight-per-latitude CSV: header ``lat,weight``, 17 significant digits."""
    rows = weight_grid.row_weights()
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("lat,weight\n")
        for lat, w in zip(grid.lat_values, rows):
            f.write(f"{lat:.17g},{w:.17g}\n")
