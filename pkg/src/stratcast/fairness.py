"""Fairness statistics over per-stratum RMSEs.

For every (model, variable, attribute, lead time) group the report
carries:

* ``gad``            - greatest absolute difference, max - min;
* ``variance``       - population variance (divide by n) of the group;
* ``percent_ratio``  - largest RMSE as a percent of the smallest.

A model scoring identically in every stratum gets 0, 0 and 100.
Optional outlier filtering drops strata flagged by the local outlier
factor before the statistics are computed; two-stratum attributes are
never filtered because an outlier among two values is meaningless.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import ScoreTable

log = logging.getLogger(__name__)

DEFAULT_K = 20
DEFAULT_LOF_THRESHOLD = 1.5


@dataclass(frozen=True)
class OutlierFlags:
    scores: np.ndarray = field(repr=False)
    flagged: np.ndarray = field(repr=False)
    k: int = DEFAULT_K
    threshold: float = DEFAULT_LOF_THRESHOLD


@dataclass(frozen=True)
class FairnessRow:
    model: str
    variable: str
    attribute: str
    lead_time_h: int
    gad: float
    variance: float
    percent_ratio: float
    n_strata: int
    outliers_removed: tuple[str, ...] = ()


@dataclass
class FairnessReport:
    rows: list[FairnessRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["model", "variable", "attribute", "lead_time_h",
                 "gad", "variance", "percent_ratio", "n_strata", "outliers_removed"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.model, r.variable, r.attribute, r.lead_time_h,
                     f"{r.gad:.17g}", f"{r.variance:.17g}", f"{r.percent_ratio:.17g}",
                     r.n_strata, ";".join(r.outliers_removed)]
                )


def lof_scores(
    values, k: int = DEFAULT_K, threshold: float = DEFAULT_LOF_THRESHOLD
) -> OutlierFlags:
    """Local outlier factor of each value within a 1-D set.

    Follows the published definition: k-distance, reachability distance,
    local reachability density, and LOF as the mean neighbor-to-point
    density ratio.  Neighborhoods include every point tied at the
    k-distance.  Zero-distance convention: a point whose k-distance is 0
    sits in a duplicate cluster and gets LOF 1; a point whose neighbors
    all have infinite density relative to it inherits an infinite LOF.
    Fewer than two distinct values yields LOF 1 everywhere, no flags.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("lof_scores expects a 1-D value set")
    n = x.size
    k_eff = max(1, min(k, n - 1))
    if n < 2 or np.unique(x).size < 2:
        return OutlierFlags(np.ones(n), np.zeros(n, dtype=bool), k_eff, threshold)

    dist = np.abs(x[:, None] - x[None, :])
    off_diag = dist + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
    kdist = np.sort(off_diag, axis=1)[:, k_eff - 1]
    neighborhoods = [np.nonzero(off_diag[i] <= kdist[i])[0] for i in range(n)]

    lrd = np.empty(n)
    for i, nb in enumerate(neighborhoods):
        # reach-dist(p, o) = max(k-distance(o), d(p, o))
        total = float(np.maximum(kdist[nb], dist[i, nb]).sum())
        lrd[i] = np.inf if total == 0.0 else len(nb) / total

    lof = np.empty(n)
    for i, nb in enumerate(neighborhoods):
        if np.isinf(lrd[i]):
            lof[i] = 1.0
        else:
            lof[i] = float(np.mean(lrd[nb]) / lrd[i])
    return OutlierFlags(lof, lof > threshold, k_eff, threshold)


def measure_fairness(
    scores: ScoreTable,
    filter_outliers: bool = False,
    k: int = DEFAULT_K,
    lof_threshold: float = DEFAULT_LOF_THRESHOLD,
) -> FairnessReport:
    """Fairness statistics per (model, variable, attribute, lead time).

    Strata with no valid RMSE are ignored; groups left with fewer than
    two strata produce no row (logged).  Outlier filtering runs per
    group on the 1-D RMSE set, with k clamped to group size minus one.
    """
    grouped: dict[tuple[str, str, str], dict[int, list[tuple[str, float]]]] = {}
    for row in scores.rows:
        if row.rmse is None:
            continue
        key = (row.model, row.variable, row.attribute)
        grouped.setdefault(key, {}).setdefault(row.lead_time_h, []).append(
            (row.stratum, row.rmse)
        )

    out: list[FairnessRow] = []
    for (model, variable, attribute), by_lead in grouped.items():
        for lead in sorted(by_lead):
            entries = by_lead[lead]
            removed: tuple[str, ...] = ()
            if filter_outliers:
                if len(entries) == 2:
                    log.info(
                        "%s/%s/%s lead %sh: 2 strata, outlier filtering skipped",
                        model, variable, attribute, lead,
                    )
                elif len(entries) > 2:
                    flags = lof_scores(
                        [v for _, v in entries], k=k, threshold=lof_threshold
                    )
                    removed = tuple(
                        name for (name, _), f in zip(entries, flags.flagged) if f
                    )
                    entries = [e for e, f in zip(entries, flags.flagged) if not f]
            if len(entries) < 2:
                log.warning(
                    "%s/%s/%s lead %sh: fewer than 2 strata after filtering; no row",
                    model, variable, attribute, lead,
                )
                continue
            vals = np.array([v for _, v in entries])
            lo, hi = float(vals.min()), float(vals.max())
            out.append(
                FairnessRow(
                    model=model,
                    variable=variable,
                    attribute=attribute,
                    lead_time_h=lead,
                    gad=hi - lo,
                    variance=float(np.mean((vals - vals.mean()) ** 2)),
                    percent_ratio=100.0 * hi / lo if lo > 0 else float("inf"),
                    n_strata=len(entries),
                    outliers_removed=removed,
                )
            )
    return FairnessReport(out)


CURVE_METRICS = ("gad", "variance", "percent_ratio")


def fairness_curves(report: FairnessReport) -> list[tuple[str, str, str, int, str, float]]:
    """Long-form rows for plotting: one per (group, lead, metric)."""
    rows = []
    for r in report.rows:
        for metric in CURVE_METRICS:
            rows.append(
                (r.model, r.variable, r.attribute, r.lead_time_h, metric, getattr(r, metric))
            )
    return rows


def write_fairness_curves(report: FairnessReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "variable", "attribute", "lead_time_h", "metric", "value"])
        for row in fairness_curves(report):
            writer.writerow(list(row[:5]) + [f"{row[5]:.17g}"])
