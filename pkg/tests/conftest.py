"""Shared fixtures: tiny grids, synthetic territories, catalogs."""

from __future__ import annotations

import numpy as np
import pytest
from shapely.geometry import MultiPolygon, Polygon

from stratcast.boundaries import AttributeCatalog, IncomeClass, TerritoryRecord, build_catalog
from stratcast.grid import build_grid


def box_territory(tid: str, name: str, lon_lo, lat_lo, lon_hi, lat_hi) -> TerritoryRecord:
    poly = Polygon(
        [(lon_lo, lat_lo), (lon_hi, lat_lo), (lon_hi, lat_hi), (lon_lo, lat_hi)]
    )
    return TerritoryRecord(territory_id=tid, display_name=name, geometry=MultiPolygon([poly]))


def catalog_from_boxes(boxes, subregions=None, income=None) -> AttributeCatalog:
    """boxes: list of (tid, name, lon_lo, lat_lo, lon_hi, lat_hi)."""
    records = [box_territory(*b) for b in boxes]
    sub = subregions or {b[0]: "main" for b in boxes}
    inc = income or {}
    return build_catalog(records, sub, inc)


def random_catalog(rng: np.random.Generator, n_territories: int) -> AttributeCatalog:
    """Random lattice-aligned box territories (coordinates on 0.25 steps)."""
    boxes = []
    income_classes = list(IncomeClass)
    income = {}
    subregions = {}
    for t in range(n_territories):
        lon_lo = float(rng.integers(-700, 600)) * 0.25
        lat_lo = float(rng.integers(-340, 260)) * 0.25
        width = float(rng.integers(4, 200)) * 0.25
        height = float(rng.integers(4, 120)) * 0.25
        lon_hi = min(lon_lo + width, 180.0)
        lat_hi = min(lat_lo + height, 85.0)
        tid = f"T{t}"
        boxes.append((tid, f"terr_{t}", lon_lo, lat_lo, lon_hi, lat_hi))
        subregions[tid] = f"sub_{t % 2}"
        if rng.random() < 0.8:
            income[tid] = income_classes[int(rng.integers(0, 4))]
    records = [box_territory(*b) for b in boxes]
    return build_catalog(records, subregions, income)


@pytest.fixture
def grid_1p5():
    return build_grid(1.5)


@pytest.fixture
def grid_coarse():
    # 15 degrees: 24 lon x 13 lat, matches the small-fixture bound
    return build_grid(15.0)


@pytest.fixture
def square_catalog():
    return catalog_from_boxes(
        [("SQ", "Square", 0.0, 0.0, 10.0, 10.0)],
        subregions={"SQ": "main"},
        income={"SQ": IncomeClass.HIGH},
    )
