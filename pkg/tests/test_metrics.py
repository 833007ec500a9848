"""Weighted RMSE correctness: arithmetic cases, invariants, oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratcast.datastore import ForecastBundle, SynthSpec, TruthBundle, synth_bundle
from stratcast.errors import FingerprintError, SchemaError
from stratcast.geodesy import SpheroidParams, latitude_weights
from stratcast.grid import build_grid
from stratcast.metrics import ScoreRow, ScoreTable, gridpoint_rmse, stratified_rmse, weighted_rmse
from stratcast.stratify import MaskSet, StrataMask, assign_strata

from conftest import catalog_from_boxes
from oracles import triple_loop_rmse_at_lead


class TestWeightedRmse:
    def test_identity_is_zero(self):
        x = np.array([1.0, 2.0, 3.0])
        assert weighted_rmse(x, x, np.ones(3)) == 0.0

    def test_two_point_weighted_case(self):
        # errors {1, 3} with weights {1, 3}: sqrt((1*1 + 3*9)/4) = sqrt(7)
        pred = np.array([1.0, 3.0])
        truth = np.zeros(2)
        assert weighted_rmse(pred, truth, np.array([1.0, 3.0])) == pytest.approx(
            math.sqrt(7.0), rel=1e-15
        )

    def test_equal_weight_case(self):
        # errors {3, 4}: sqrt((9 + 16)/2) = sqrt(12.5)
        got = weighted_rmse(np.array([3.0, 4.0]), np.zeros(2), np.ones(2))
        assert got == pytest.approx(math.sqrt(12.5), rel=1e-15)

    def test_nan_pairs_excluded(self):
        pred = np.array([np.nan, 2.0, 5.0])
        truth = np.array([0.0, 0.0, np.nan])
        got = weighted_rmse(pred, truth, np.array([10.0, 1.0, 10.0]))
        assert got == pytest.approx(2.0, rel=1e-15)

    def test_empty_mask_is_absent(self):
        x = np.array([1.0, 2.0])
        assert weighted_rmse(x, x, np.ones(2), mask=np.zeros(2, dtype=bool)) is None
        assert weighted_rmse(np.array([np.nan]), np.array([1.0]), np.ones(1)) is None

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(0)
        pred, truth = rng.normal(size=10), rng.normal(size=10)
        w = rng.uniform(0.1, 2.0, size=10)
        a = weighted_rmse(pred, truth, w)
        b = weighted_rmse(pred, truth, 37.5 * w)
        assert a == pytest.approx(b, rel=1e-12)

    @given(st.one_of(st.just(0.0), st.floats(min_value=1e-150, max_value=1e3)))
    @settings(max_examples=50, derandomize=True)
    def test_scale_equivariance(self, c):
        # scales whose square stays in normal float range
        pred = np.array([1.0, -2.0, 0.5, 4.0])
        truth = np.zeros(4)
        w = np.array([1.0, 2.0, 3.0, 4.0])
        base = weighted_rmse(pred, truth, w)
        scaled = weighted_rmse(c * pred, np.zeros(4), w)
        assert scaled == pytest.approx(c * base, rel=1e-12, abs=0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            weighted_rmse(np.ones(3), np.ones(4), np.ones(3))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            weighted_rmse(np.ones(2), np.ones(2), np.array([1.0, -1.0]))


def tiny_world(resolution=15.0, boxes=None, n_init=2, leads=(12, 24), seed=13):
    grid = build_grid(resolution)
    boxes = boxes or [("A", "Alpha", 0, 0, 30, 30), ("B", "Beta", 60, -30, 120, 15)]
    catalog = catalog_from_boxes(boxes)
    masks = assign_strata(grid, catalog)
    weights = latitude_weights(grid, SpheroidParams())
    spec = SynthSpec(n_init=n_init, lead_times_h=tuple(leads))
    forecast, truth = synth_bundle(grid, spec, seed=seed)
    return grid, catalog, masks, weights, forecast, truth


class TestStratifiedRmse:
    def test_planted_constant_error_recovered_exactly(self):
        grid, catalog, masks, weights, _, _ = tiny_world()
        from stratcast.datastore import region_errors_from_masks

        regions = region_errors_from_masks(masks, "territory", {"Alpha": 2.0})
        spec = SynthSpec(n_init=2, lead_times_h=(12, 24), region_errors=regions)
        forecast, truth = synth_bundle(grid, spec, seed=13)
        table = stratified_rmse(forecast, truth, masks, weights, model="demo")
        by_key = {(r.stratum, r.lead_time_h): r.rmse for r in table.rows if r.attribute == "territory"}
        assert by_key[("Alpha", 12)] == 2.0
        assert by_key[("Alpha", 24)] == 2.0
        assert by_key[("Beta", 12)] == 0.0

    def test_pooled_two_init_times(self):
        # per-time constant errors 0 and 2 pool to sqrt((0 + 4)/2) = sqrt(2)
        grid = build_grid(30.0)
        catalog = catalog_from_boxes([("A", "Alpha", -180, -90, 180, 90)])
        masks = assign_strata(grid, catalog)
        weights = latitude_weights(grid, SpheroidParams())
        spec = SynthSpec(n_init=2, lead_times_h=(12,))
        forecast, truth = synth_bundle(grid, spec, seed=2)
        values = forecast.values.copy()
        values[1, 0] += 2.0
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        table = stratified_rmse(forecast, truth, masks, weights)
        row = next(r for r in table.rows if r.stratum == "Alpha")
        assert row.rmse == pytest.approx(math.sqrt(2.0), rel=1e-12)
        assert row.n_times == 2

    def test_all_nan_stratum_marked_absent(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world()
        bits = masks[("territory", "Alpha")].bits
        values = forecast.values.copy()
        values[:, :, bits] = np.nan
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        table = stratified_rmse(forecast, truth, masks, weights)
        alpha = [r for r in table.rows if r.stratum == "Alpha"]
        assert all(r.rmse is None for r in alpha)
        beta = [r for r in table.rows if r.stratum == "Beta"]
        assert all(r.rmse is not None for r in beta)

    def test_missing_truth_slice_error_names_time(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world()
        truncated = TruthBundle(
            variable=truth.variable, units=truth.units,
            valid_times=truth.valid_times[:-1], values=truth.values[:-1],
            grid_fingerprint=truth.grid_fingerprint,
        )
        with pytest.raises(SchemaError, match="2020-01-02T12:00:00Z"):
            stratified_rmse(forecast, truncated, masks, weights)

    def test_missing_truth_slice_skip_mode(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world()
        truncated = TruthBundle(
            variable=truth.variable, units=truth.units,
            valid_times=truth.valid_times[:-1], values=truth.values[:-1],
            grid_fingerprint=truth.grid_fingerprint,
        )
        table = stratified_rmse(forecast, truncated, masks, weights, on_missing_truth="skip")
        # the last (init, lead) pair is gone; the latest lead pools 1 time
        latest = [r for r in table.rows if r.lead_time_h == 24]
        assert all(r.n_times == 1 for r in latest)

    def test_fingerprint_mismatch_rejected(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world()
        other = build_grid(30.0)
        other_masks = assign_strata(other, catalog)
        with pytest.raises(FingerprintError):
            stratified_rmse(forecast, truth, other_masks, latitude_weights(other))

    def test_unknown_lead_rejected(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world()
        with pytest.raises(ValueError, match="lead"):
            stratified_rmse(forecast, truth, masks, weights, lead_times_h=[999])

    def test_pooling_differs_from_mean_of_rmses(self):
        # Asymmetric fixture: pooling sqrt((0+4)/2) = 1.414... differs from
        # the mean of per-time RMSEs (0 + 2)/2 = 1; the implementation pools.
        grid = build_grid(30.0)
        catalog = catalog_from_boxes([("A", "Alpha", -180, -90, 180, 90)])
        masks = assign_strata(grid, catalog)
        weights = latitude_weights(grid)
        spec = SynthSpec(n_init=2, lead_times_h=(12,))
        forecast, truth = synth_bundle(grid, spec, seed=2)
        values = forecast.values.copy()
        values[1, 0] += 2.0
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        row = next(r for r in stratified_rmse(forecast, truth, masks, weights).rows)
        pooled = math.sqrt(2.0)
        mean_of_rmses = 1.0
        assert abs(pooled - mean_of_rmses) > 0.4  # genuinely distinct rules
        assert row.rmse == pytest.approx(pooled, rel=1e-12)

    def test_mask_union_bound(self):
        grid, catalog, masks, weights, forecast, truth = tiny_world(seed=21)
        rng = np.random.default_rng(7)
        values = forecast.values + rng.normal(0, 1, size=forecast.values.shape)
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        a_bits = masks[("territory", "Alpha")].bits
        b_bits = masks[("territory", "Beta")].bits & ~a_bits  # force disjoint
        union_bits = a_bits | b_bits
        shape = a_bits.shape
        custom = MaskSet(
            grid_fingerprint=masks.grid_fingerprint,
            catalog_fingerprint=masks.catalog_fingerprint,
            masks=[
                StrataMask("t", "a", shape, a_bits),
                StrataMask("t", "b", shape, b_bits),
                StrataMask("t", "u", shape, union_bits),
            ],
        )
        table = stratified_rmse(forecast, truth, custom, weights)
        for lead in forecast.lead_times_h:
            by = {r.stratum: r.rmse for r in table.rows if r.lead_time_h == lead}
            assert min(by["a"], by["b"]) <= by["u"] <= max(by["a"], by["b"])

    @pytest.mark.parametrize("seed", range(4))
    def test_triple_loop_oracle(self, seed):
        rng = np.random.default_rng(300 + seed)
        grid = build_grid(15.0)  # 24 x 13 fits the small-fixture bound
        catalog = catalog_from_boxes(
            [("A", "Alpha", -45, -45, 15, 15), ("B", "Beta", 30, 0, 120, 60)]
        )
        masks = assign_strata(grid, catalog)
        weights = latitude_weights(grid)
        spec = SynthSpec(n_init=3, lead_times_h=(12, 24))
        forecast, truth = synth_bundle(grid, spec, seed=seed)
        noisy = forecast.values + rng.normal(0, 2, size=forecast.values.shape)
        noisy[rng.random(noisy.shape) < 0.05] = np.nan
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=noisy, grid_fingerprint=forecast.grid_fingerprint,
        )
        table = stratified_rmse(forecast, truth, masks, weights)
        rows = weights.row_weights()
        for r in table.rows:
            bits = masks[(r.attribute, r.stratum)].bits
            expected = triple_loop_rmse_at_lead(forecast, truth, r.lead_time_h, bits, rows)
            if expected is None:
                assert r.rmse is None
            else:
                assert r.rmse == pytest.approx(expected, rel=1e-12)


class TestGridpointRmse:
    def _pair(self, grid, errors_by_time):
        catalog = catalog_from_boxes([("A", "Alpha", -180, -90, 180, 90)])
        spec = SynthSpec(n_init=len(errors_by_time), lead_times_h=(12,))
        forecast, truth = synth_bundle(grid, spec, seed=1)
        values = forecast.values.copy()
        for ti, err in enumerate(errors_by_time):
            values[ti, 0] += err
        return (
            ForecastBundle(
                variable=forecast.variable, units=forecast.units,
                init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
                values=values, grid_fingerprint=forecast.grid_fingerprint,
            ),
            truth,
        )

    def test_constant_error(self, grid_coarse):
        forecast, truth = self._pair(grid_coarse, [-3.0, -3.0])
        raster = gridpoint_rmse(forecast, truth, 12)
        assert np.allclose(raster.values, 3.0, rtol=1e-12)

    def test_zero_two_errors(self, grid_coarse):
        forecast, truth = self._pair(grid_coarse, [0.0, 2.0])
        raster = gridpoint_rmse(forecast, truth, 12)
        assert np.allclose(raster.values, math.sqrt(2.0), rtol=1e-12)

    def test_nan_uses_remaining_sample(self, grid_coarse):
        forecast, truth = self._pair(grid_coarse, [0.0, 2.0])
        values = forecast.values.copy()
        values[0, 0, 5, 5] = np.nan
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        raster = gridpoint_rmse(forecast, truth, 12)
        assert raster.values[5, 5] == pytest.approx(2.0, rel=1e-12)

    def test_all_nan_gridpoint_is_nan(self, grid_coarse):
        forecast, truth = self._pair(grid_coarse, [0.0, 2.0])
        values = forecast.values.copy()
        values[:, 0, 2, 2] = np.nan
        forecast = ForecastBundle(
            variable=forecast.variable, units=forecast.units,
            init_times=forecast.init_times, lead_times_h=forecast.lead_times_h,
            values=values, grid_fingerprint=forecast.grid_fingerprint,
        )
        raster = gridpoint_rmse(forecast, truth, 12)
        assert math.isnan(raster.values[2, 2])

    def test_unknown_lead(self, grid_coarse):
        forecast, truth = self._pair(grid_coarse, [0.0])
        with pytest.raises(ValueError, match="lead"):
            gridpoint_rmse(forecast, truth, 18)


class TestScoreTableCsv:
    def test_round_trip_including_absent(self, tmp_path):
        table = ScoreTable(
            rows=[
                ScoreRow("m", "T850", "territory", "Alpha", 12, 1.2345678901234567, 10, 2),
                ScoreRow("m", "T850", "territory", "Beta, the second", 12, None, 4, 2),
            ]
        )
        path = tmp_path / "scores.csv"
        table.to_csv(path)
        loaded = ScoreTable.from_csv(path)
        assert loaded.rows == table.rows

    def test_header_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError):
            ScoreTable.from_csv(path)
