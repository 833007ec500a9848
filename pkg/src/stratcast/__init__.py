"""Stratified, area-weighted evaluation of gridded Earth forecasts.

Gridpoints of an equiangular lattice are assigned to real-world strata
(territory, subregion, income class, landcover), per-stratum
latitude-weighted RMSE is computed over lead times with exact oblate
spheroid cell areas, and fairness is summarized as the spread of the
per-stratum scores.
"""

__version__ = "0.1.0"

from .boundaries import (
    AttributeCatalog,
    IncomeClass,
    TerritoryRecord,
    build_catalog,
    load_attribute_tables,
    load_boundaries,
)
from .datastore import (
    ForecastBundle,
    SynthSpec,
    TruthBundle,
    read_bundle,
    synth_bundle,
    write_bundle,
)
from .fairness import FairnessReport, lof_scores, measure_fairness
from .geodesy import (
    LatitudeBand,
    SpheroidParams,
    WeightGrid,
    band_area,
    cell_area,
    latitude_weights,
    polar_overestimate,
    total_surface_area,
)
from .grid import CellPolygon, EquiangularGrid, band_of, build_grid, cell_polygon
from .metrics import ScoreTable, gridpoint_rmse, stratified_rmse, weighted_rmse
from .stratify import MaskSet, StrataMask, assign_strata, load_masks, membership_counts, save_masks

__all__ = [
    "AttributeCatalog",
    "CellPolygon",
    "EquiangularGrid",
    "FairnessReport",
    "ForecastBundle",
    "IncomeClass",
    "LatitudeBand",
    "MaskSet",
    "ScoreTable",
    "SpheroidParams",
    "StrataMask",
    "SynthSpec",
    "TerritoryRecord",
    "TruthBundle",
    "WeightGrid",
    "assign_strata",
    "band_area",
    "band_of",
    "build_catalog",
    "build_grid",
    "cell_area",
    "cell_polygon",
    "gridpoint_rmse",
    "latitude_weights",
    "load_attribute_tables",
    "load_boundaries",
    "load_masks",
    "lof_scores",
    "measure_fairness",
    "membership_counts",
    "polar_overestimate",
    "read_bundle",
    "save_masks",
    "stratified_rmse",
    "synth_bundle",
    "total_surface_area",
    "weighted_rmse",
    "write_bundle",
]
