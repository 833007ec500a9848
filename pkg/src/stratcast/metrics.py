"""Latitude-weighted RMSE, per stratum and per gridpoint.

The scoring rule pools weighted squared errors over every initialization
time before taking the square root, i.e. time is treated as extra
samples in one global reduction:

    rmse = sqrt( sum_t sum_g w_g * e_{t,g}^2  /  sum_t sum_g w_g )

restricted to gridpoints in the stratum with finite pred/truth pairs
(NaN samples leave both sums).  This is deliberately different from
averaging per-time RMSEs; the tests pin the distinction.

Accumulation is float64 with compensated summation across init times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from .datastore import ForecastBundle, TruthBundle, format_time
from .errors import FingerprintError, SchemaError
from .geodesy import WeightGrid
from .stratify import MaskSet, StrataMask


class KahanSum:
    """Compensated running sum; keeps a carry for the low-order bits."""

    __slots__ = ("total", "carry")

    def __init__(self):
        self.total = 0.0
        self.carry = 0.0

    def add(self, value: float) -> None:
        value += self.carry
        previous = self.total
        self.total += value
        self.carry = value - (self.total - previous)


@dataclass(frozen=True)
class ScoreRow:
    model: str
    variable: str
    attribute: str
    stratum: str
    lead_time_h: int
    rmse: float | None  # None marks "no valid samples", never 0
    n_gridpoints: int
    n_times: int


@dataclass
class ScoreTable:
    rows: list[ScoreRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["model", "variable", "attribute", "stratum", "lead_time_h",
                 "rmse", "n_gridpoints", "n_times"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.model, r.variable, r.attribute, r.stratum, r.lead_time_h,
                     "" if r.rmse is None else f"{r.rmse:.17g}",
                     r.n_gridpoints, r.n_times]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScoreTable":
        rows = []
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            expected = {"model", "variable", "attribute", "stratum", "lead_time_h",
                        "rmse", "n_gridpoints", "n_times"}
            if reader.fieldnames is None or set(reader.fieldnames) != expected:
                raise SchemaError(f"{path}: unexpected score table header {reader.fieldnames}")
            for row in reader:
                rows.append(
                    ScoreRow(
                        model=row["model"],
                        variable=row["variable"],
                        attribute=row["attribute"],
                        stratum=row["stratum"],
                        lead_time_h=int(row["lead_time_h"]),
                        rmse=None if row["rmse"] == "" else float(row["rmse"]),
                        n_gridpoints=int(row["n_gridpoints"]),
                        n_times=int(row["n_times"]),
                    )
                )
        return cls(rows)


@dataclass(frozen=True)
class ErrorRaster:
    variable: str
    lead_time_h: int
    grid_shape: tuple[int, int]
    values: np.ndarray = field(repr=False)
    grid_fingerprint: str = ""


def _unwrap_weights(weights) -> np.ndarray:
    return weights.weights if isinstance(weights, WeightGrid) else np.asarray(weights, dtype=np.float64)


def _unwrap_mask(mask) -> np.ndarray | None:
    if mask is None:
        return None
    return mask.bits if isinstance(mask, StrataMask) else np.asarray(mask, dtype=bool)


def weighted_rmse(pred, truth, weights, mask=None) -> float | None:
    """Area-weighted RMSE over one field; None when no valid samples.

    NaN in either input drops that sample from numerator and denominator
    alike.  The ratio form makes the result invariant to scaling all
    weights by a positive constant.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    w = _unwrap_weights(weights)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} != truth shape {t.shape}")
    w = np.broadcast_to(w, p.shape)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    m = _unwrap_mask(mask)
    valid = np.isfinite(p) & np.isfinite(t)
    if m is not None:
        valid &= np.broadcast_to(m, p.shape)
    if not valid.any():
        return None
    err2 = (p - t) ** 2
    num = float(np.sum(w[valid] * err2[valid]))
    den = float(np.sum(w[valid]))
    if den == 0.0:
        return None
    return math.sqrt(num / den)


def stratified_rmse(
    pred: ForecastBundle,
    truth: TruthBundle,
    masks: MaskSet,
    weights: WeightGrid,
    model: str = "model",
    lead_times_h: list[int] | None = None,
    on_missing_truth: str = "error",
) -> ScoreTable:
    """Per-stratum latitude-weighted RMSE at each lead time.

    Squared errors are pooled across all init times per (stratum, lead)
    before the square root.  ``on_missing_truth`` selects between the
    strict contract (raise, naming the absent valid time) and skipping
    the (init, lead) pairs that have no truth slice.
    """
    if on_missing_truth not in ("error", "skip"):
        raise ValueError("on_missing_truth must be 'error' or 'skip'")
    for name, fp in (("pred", pred.grid_fingerprint), ("truth", truth.grid_fingerprint)):
        if fp != masks.grid_fingerprint:
            raise FingerprintError(
                f"{name} bundle grid {fp} does not match mask grid {masks.grid_fingerprint}"
            )
    shape = pred.values.shape[-2:]
    if weights.grid_shape != shape:
        raise ValueError(f"weight grid shape {weights.grid_shape} != field shape {shape}")

    leads = list(pred.lead_times_h) if lead_times_h is None else list(lead_times_h)
    unknown = set(leads) - set(pred.lead_times_h)
    if unknown:
        raise ValueError(f"lead times {sorted(unknown)} not present in bundle")
    lead_pos = {h: i for i, h in enumerate(pred.lead_times_h)}

    truth_index = {t: i for i, t in enumerate(truth.valid_datetimes())}
    init_dts = pred.init_datetimes()
    w = weights.weights
    pred64 = pred.values.astype(np.float64, copy=False)
    truth64 = truth.values.astype(np.float64, copy=False)

    stratum_masks = [(m.attribute, m.stratum, m.bits) for m in masks.masks]
    acc = {
        (s_idx, lead): (KahanSum(), KahanSum())
        for s_idx in range(len(stratum_masks))
        for lead in leads
    }
    times_used = {lead: 0 for lead in leads}

    for lead in leads:
        li = lead_pos[lead]
        for ti, init_dt in enumerate(init_dts):
            valid_time = init_dt + timedelta(hours=lead)
            if valid_time not in truth_index:
                if on_missing_truth == "error":
                    raise SchemaError(
                        f"truth bundle has no slice at valid time "
                        f"{format_time(valid_time)} (init {pred.init_times[ti]} "
                        f"+ lead {lead}h)"
                    )
                continue
            times_used[lead] += 1
            t_field = truth64[truth_index[valid_time]]
            p_field = pred64[ti, li]
            valid = np.isfinite(p_field) & np.isfinite(t_field)
            err2w = np.zeros(shape)
            err2w[valid] = w[valid] * (p_field[valid] - t_field[valid]) ** 2
            for s_idx, (_, _, bits) in enumerate(stratum_masks):
                sel = bits & valid
                num_acc, den_acc = acc[(s_idx, lead)]
                num_acc.add(float(err2w[sel].sum()))
                den_acc.add(float(w[sel].sum()))

    rows = []
    for s_idx, (attribute, stratum, bits) in enumerate(stratum_masks):
        n_gridpoints = int(bits.sum())
        for lead in leads:
            num_acc, den_acc = acc[(s_idx, lead)]
            rmse = math.sqrt(num_acc.total / den_acc.total) if den_acc.total > 0 else None
            rows.append(
                ScoreRow(
                    model=model,
                    variable=pred.variable,
                    attribute=attribute,
                    stratum=stratum,
                    lead_time_h=lead,
                    rmse=rmse,
                    n_gridpoints=n_gridpoints,
                    n_times=times_used[lead],
                )
            )
    return ScoreTable(rows)


def gridpoint_rmse(pred: ForecastBundle, truth: TruthBundle, lead_time_h: int) -> ErrorRaster:
    """Temporally reduced RMSE at each gridpoint for one lead time.

    No spatial weighting applies (each output value is a single point);
    gridpoints with no valid sample at any init time come out NaN.
    """
    if lead_time_h not in pred.lead_times_h:
        raise ValueError(f"lead time {lead_time_h} not present in bundle")
    li = list(pred.lead_times_h).index(lead_time_h)
    truth_index = {t: i for i, t in enumerate(truth.valid_datetimes())}
    shape = pred.values.shape[-2:]
    num = np.zeros(shape)
    cnt = np.zeros(shape, dtype=np.int64)
    for ti, init_dt in enumerate(pred.init_datetimes()):
        valid_time = init_dt + timedelta(hours=lead_time_h)
        if valid_time not in truth_index:
            raise SchemaError(
                f"truth bundle has no slice at valid time {format_time(valid_time)}"
            )
        p = pred.values[ti, li].astype(np.float64, copy=False)
        t = truth.values[truth_index[valid_time]].astype(np.float64, copy=False)
        valid = np.isfinite(p) & np.isfinite(t)
        num[valid] += (p[valid] - t[valid]) ** 2
        cnt[valid] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(num / cnt)
    out[cnt == 0] = np.nan
    return ErrorRaster(
        variable=pred.variable,
        lead_time_h=lead_time_h,
        grid_shape=shape,
        values=out,
        grid_fingerprint=pred.grid_fingerprint,
    )
