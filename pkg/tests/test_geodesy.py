"""Geodesy: closed forms against quadrature, weights, invariants."""

import math

import numpy as np
import pytest

from stratcast.geodesy import (
    LatitudeBand,
    SpheroidParams,
    WeightGrid,
    band_area,
    cell_area,
    latitude_weights,
    polar_overestimate,
    total_surface_area,
    write_weights_csv,
)
from stratcast.grid import build_grid

from oracles import quad_band_area

EARTH = SpheroidParams()
EARTH_SURFACE_M2 = 510_065_604_944_206.145


class TestSpheroidParams:
    def test_defaults(self):
        assert EARTH.equatorial_radius_m == 6_378_137.0
        assert EARTH.polar_radius_m == 6_356_752.0

    @pytest.mark.parametrize("a,c", [(1.0, 2.0), (0.0, 0.0), (1.0, -1.0), (-2.0, -3.0)])
    def test_rejects_non_oblate(self, a, c):
        with pytest.raises(ValueError):
            SpheroidParams(a, c)

    def test_sphere_degenerate_allowed(self):
        assert SpheroidParams(1.0, 1.0).is_sphere


class TestLatitudeBand:
    @pytest.mark.parametrize("lo,hi", [(10.0, 10.0), (20.0, 10.0), (-91.0, 0.0), (0.0, 90.5)])
    def test_rejects_bad_bounds(self, lo, hi):
        with pytest.raises(ValueError):
            LatitudeBand(lo, hi)


class TestTotalSurfaceArea:
    def test_earth_value(self):
        total = total_surface_area(EARTH)
        assert total == pytest.approx(EARTH_SURFACE_M2, rel=1e-9)

    def test_unit_sphere(self):
        assert total_surface_area(SpheroidParams(1.0, 1.0)) == pytest.approx(4 * math.pi, rel=1e-15)

    def test_matches_quadrature_a2_c1(self):
        closed = total_surface_area(SpheroidParams(2.0, 1.0))
        numeric = quad_band_area(2.0, 1.0, -90.0, 90.0)
        assert closed == pytest.approx(numeric, rel=1e-12)


class TestBandArea:
    def test_full_zone_is_total(self):
        assert band_area(EARTH, LatitudeBand(-90, 90)) == pytest.approx(
            total_surface_area(EARTH), rel=1e-15
        )

    def test_hemisphere_is_half(self):
        assert band_area(EARTH, LatitudeBand(-90, 0)) == pytest.approx(
            total_surface_area(EARTH) / 2, rel=1e-12
        )

    def test_band_30_60_matches_quadrature(self):
        closed = band_area(EARTH, LatitudeBand(30, 60))
        numeric = quad_band_area(6_378_137.0, 6_356_752.0, 30.0, 60.0)
        assert closed == pytest.approx(numeric, rel=1e-9)

    def test_quadrature_agreement_random_bands(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            lo = rng.uniform(-90.0, 89.5)
            hi = rng.uniform(lo + 0.05, 90.0)
            closed = band_area(EARTH, LatitudeBand(lo, hi))
            numeric = quad_band_area(6_378_137.0, 6_356_752.0, lo, hi)
            assert closed == pytest.approx(numeric, rel=1e-9), (lo, hi)

    def test_monotonic_toward_poles(self):
        delta = 5.0
        areas = [band_area(EARTH, LatitudeBand(phi, phi + delta)) for phi in range(0, 85, 5)]
        assert all(a > b for a, b in zip(areas, areas[1:]))

    def test_hemispheric_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            lo = rng.uniform(-89.0, 88.0)
            hi = rng.uniform(lo + 0.5, 89.0)
            north = band_area(EARTH, LatitudeBand(lo, hi))
            south = band_area(EARTH, LatitudeBand(-hi, -lo))
            assert north == pytest.approx(south, rel=1e-12)

    def test_sphere_matches_sine_formula(self):
        sphere = EARTH.as_sphere()
        a = sphere.equatorial_radius_m
        rng = np.random.default_rng(1)
        for _ in range(25):
            lo = rng.uniform(-90.0, 89.0)
            hi = rng.uniform(lo + 0.1, 90.0)
            expected = (
                a * a * math.radians(360.0)
                * (math.sin(math.radians(hi)) - math.sin(math.radians(lo)))
            )
            assert band_area(sphere, LatitudeBand(lo, hi)) == pytest.approx(expected, rel=1e-12)


class TestCellArea:
    def test_full_longitude_is_band(self):
        band = LatitudeBand(10, 20)
        assert cell_area(EARTH, band, 360.0) == band_area(EARTH, band)

    def test_proportionality(self):
        band = LatitudeBand(-0.75, 0.75)
        assert cell_area(EARTH, band, 1.5) == pytest.approx(
            band_area(EARTH, band) * 1.5 / 360.0, rel=1e-15
        )

    def test_band_partition_into_240_cells(self):
        band = LatitudeBand(42.75, 44.25)
        total = 240 * cell_area(EARTH, band, 1.5)
        assert total == pytest.approx(band_area(EARTH, band), rel=1e-12)

    @pytest.mark.parametrize("width", [0.0, -1.0, 361.0])
    def test_rejects_bad_width(self, width):
        with pytest.raises(ValueError):
            cell_area(EARTH, LatitudeBand(0, 1), width)


class TestPartition:
    @pytest.mark.parametrize("resolution", [1.5, 0.25])
    def test_cells_sum_to_total(self, resolution):
        grid = build_grid(resolution)
        from stratcast.grid import band_of

        total = sum(band_area(EARTH, band_of(grid, i)) for i in range(grid.n_lat))
        assert total == pytest.approx(total_surface_area(EARTH), rel=1e-6)


class TestLatitudeWeights:
    def test_mean_is_one(self, grid_1p5):
        for model in ("oblate", "sphere"):
            w = latitude_weights(grid_1p5, EARTH, model=model)
            assert abs(w.weights.mean() - 1.0) < 1e-12

    def test_constant_along_longitude(self, grid_1p5):
        w = latitude_weights(grid_1p5, EARTH)
        assert np.all(w.weights == w.weights[:, :1])

    def test_rejects_unknown_model(self, grid_1p5):
        with pytest.raises(ValueError):
            latitude_weights(grid_1p5, EARTH, model="geoid")

    def test_weight_grid_shape_validated(self):
        with pytest.raises(ValueError):
            WeightGrid(grid_shape=(3, 4), weights=np.ones((4, 3)))

    def test_equator_heavier_than_pole(self, grid_1p5):
        rows = latitude_weights(grid_1p5, EARTH).row_weights()
        assert rows[grid_1p5.n_lat // 2] > 1.0 > rows[0]


class TestPolarOverestimate:
    def test_sphere_vs_sphere_is_zero(self):
        sphere = SpheroidParams(6_378_137.0, 6_378_137.0)
        assert polar_overestimate(1.5, sphere) == pytest.approx(0.0, abs=1e-9)

    def test_small_magnitude(self):
        # The mean-normalized sphere/oblate polar weight ratio is below a
        # percent in magnitude for Earth's flattening.
        assert abs(polar_overestimate(1.5)) < 2.0

    def test_resolution_independent(self):
        # Both models' polar weights shrink linearly with resolution, so
        # their ratio barely moves across grids.
        assert polar_overestimate(1.5) == pytest.approx(polar_overestimate(0.25), abs=0.01)


class TestWeightsCsv:
    def test_round_trip_precision(self, tmp_path, grid_coarse):
        w = latitude_weights(grid_coarse, EARTH)
        path = tmp_path / "weights.csv"
        write_weights_csv(w, grid_coarse, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "lat,weight"
        assert len(lines) == 1 + grid_coarse.n_lat
        parsed = [float(line.split(",")[1]) for line in lines[1:]]
        assert parsed == list(w.row_weights())
