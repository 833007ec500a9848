"""Per-stratum boolean membership masks over a grid, with persistence.

A gridpoint belongs to a stratum when its cell polygon intersects any
polygon of that stratum; touching a boundary counts, so cells straddling
a border join both neighbors.  ``water`` is the complement of full
containment in the land union: purely oceanic cells are water only,
coastal cells are both land and water, interior cells are land only.

Intersection is planar in lon/lat space.  Cells containing the
antimeridian are tested as a union of two rectangles, one per
hemisphere.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import box
from shapely.prepared import prep
from shapely.ops import unary_union

from .boundaries import AttributeCatalog
from .errors import BundleFormatError, FingerprintError
from .grid import EquiangularGrid, cell_polygon

log = logging.getLogger(__name__)

MASK_MAGIC = b"SAFEMASK1\n"


@dataclass(frozen=True)
class StrataMask:
    attribute: str
    stratum: str
    grid_shape: tuple[int, int]
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.bits.shape != self.grid_shape or self.bits.dtype != np.bool_:
            raise ValueError("bits must be a boolean array matching grid_shape")

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass
class MaskSet:
    grid_fingerprint: str
    catalog_fingerprint: str
    masks: list[StrataMask]

    def __getitem__(self, key: tuple[str, str]) -> StrataMask:
        attribute, stratum = key
        for m in self.masks:
            if m.attribute == attribute and m.stratum == stratum:
                return m
        raise KeyError(key)

    def require_grid(self, grid: EquiangularGrid) -> None:
        if grid.fingerprint() != self.grid_fingerprint:
            raise FingerprintError(
                f"mask set was built for grid {self.grid_fingerprint}, "
                f"not {grid.fingerprint()}"
            )


def _cell_boxes(grid: EquiangularGrid):
    """Shapely rectangles per cell; antimeridian cells yield two boxes."""
    cells = np.empty((grid.n_lat, grid.n_lon), dtype=object)
    for i in range(grid.n_lat):
        for j in range(grid.n_lon):
            poly = cell_polygon(grid, i, j)
            cells[i, j] = [box(lo, la, hi, lb) for (lo, la, hi, lb) in poly.boxes()]
    return cells


def assign_strata(grid: EquiangularGrid, catalog: AttributeCatalog) -> MaskSet:
    """Compute membership masks for every stratum of every attribute.

    Territory masks are computed geometrically; subregion, income and
    land masks are unions of member territory masks, which keeps the
    territory -> subregion consistency invariant true by construction.
    """
    cells = _cell_boxes(grid)
    flat_cells = cells.ravel()

    # Per-row and per-column cell extents for bounding-box pruning.  A cell
    # intersecting a geometry must overlap its bbox on both axes, so the
    # inclusive interval tests below never drop a true member.
    half = grid.resolution_deg / 2.0
    row_lo = np.maximum(grid.lat_values - half, -90.0)
    row_hi = np.minimum(grid.lat_values + half, 90.0)
    col_boxes = [cell_polygon(grid, 0, j).lon_boxes() for j in range(grid.n_lon)]

    territory_bits: dict[str, np.ndarray] = {}
    for tid, rec in catalog.records.items():
        bits = np.zeros((grid.n_lat, grid.n_lon), dtype=np.bool_)
        geom = rec.geometry
        if geom.is_empty:
            log.warning("territory %s has empty geometry; empty mask", tid)
            territory_bits[tid] = bits
            continue
        prepared = prep(geom)
        minx, miny, maxx, maxy = geom.bounds
        lat_idx = np.nonzero((row_lo <= maxy) & (row_hi >= miny))[0]
        lon_idx = [
            j
            for j, boxes in enumerate(col_boxes)
            if any(lo <= maxx and hi >= minx for lo, hi in boxes)
        ]
        for i in lat_idx:
            for j in lon_idx:
                if any(prepared.intersects(b) for b in cells[i, j]):
                    bits[i, j] = True
        territory_bits[tid] = bits

    def union_bits(tids) -> np.ndarray:
        bits = np.zeros((grid.n_lat, grid.n_lon), dtype=np.bool_)
        for tid in tids:
            bits |= territory_bits[tid]
        return bits

    masks: list[StrataMask] = []
    land_bits = union_bits(catalog.records.keys())
    for stratum in catalog.all_strata():
        if stratum.implicit_complement:
            bits = _water_bits(grid, catalog, flat_cells, land_bits)
        elif stratum.attribute == "landcover":
            bits = land_bits.copy()
        else:
            if not stratum.territory_ids:
                log.warning(
                    "stratum %s/%s has no member geometry; empty mask",
                    stratum.attribute,
                    stratum.name,
                )
            bits = union_bits(stratum.territory_ids)
        masks.append(
            StrataMask(stratum.attribute, stratum.name, (grid.n_lat, grid.n_lon), bits)
        )
    return MaskSet(
        grid_fingerprint=grid.fingerprint(),
        catalog_fingerprint=catalog.fingerprint(),
        masks=masks,
    )


def _water_bits(grid, catalog, flat_cells, land_bits) -> np.ndarray:
    """Water = not fully contained in the land union.

    Cells that never touch land are trivially water; only cells in the
    land mask need the exact containment test.
    """
    water = ~land_bits
    touching = np.nonzero(land_bits.ravel())[0]
    if touching.size:
        land_union = unary_union([r.geometry for r in catalog.records.values()])
        prepared = prep(land_union)
        flat_water = water.ravel()
        for k in touching:
            covered = all(prepared.covers(b) for b in flat_cells[k])
            if not covered:
                flat_water[k] = True
    return water


def membership_counts(masks: MaskSet) -> list[tuple[str, str, int]]:
    """(attribute, stratum, gridpoint count) per stratum, in mask order."""
    return [(m.attribute, m.stratum, m.count()) for m in masks.masks]


def save_masks(masks: MaskSet, path: str | Path) -> None:
    """Write the cache file: magic, header JSON line, packed bitsets.

    Bits are packed row-major with little-endian bit order, one bitset
    per stratum in mask order; round-trips are bit-exact.
    """
    path = Path(path)
    header = {
        "grid_fingerprint": masks.grid_fingerprint,
        "catalog_fingerprint": masks.catalog_fingerprint,
        "grid_shape": list(masks.masks[0].grid_shape) if masks.masks else [0, 0],
        "strata": [{"attribute": m.attribute, "stratum": m.stratum} for m in masks.masks],
    }
    buf = io.BytesIO()
    buf.write(MASK_MAGIC)
    buf.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
    buf.write(b"\n")
    for m in masks.masks:
        buf.write(np.packbits(m.bits.ravel(), bitorder="little").tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_masks(path: str | Path, grid: EquiangularGrid | None = None) -> MaskSet:
    """Read a mask cache; optionally insist it matches a grid."""
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(MASK_MAGIC):
        raise BundleFormatError(f"{path}: bad magic; not a mask cache file")
    body = raw[len(MASK_MAGIC):]
    nl = body.find(b"\n")
    if nl < 0:
        raise BundleFormatError(f"{path}: missing header line")
    try:
        header = json.loads(body[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: corrupt header ({exc})") from exc
    n_lat, n_lon = (int(x) for x in header["grid_shape"])
    n_cells = n_lat * n_lon
    stride = (n_cells + 7) // 8
    payload = body[nl + 1:]
    strata = header["strata"]
    if len(payload) != stride * len(strata):
        raise BundleFormatError(
            f"{path}: expected {stride * len(strata)} bitset bytes, got {len(payload)}"
        )
    masks = []
    for k, entry in enumerate(strata):
        packed = np.frombuffer(payload[k * stride:(k + 1) * stride], dtype=np.uint8)
        bits = np.unpackbits(packed, count=n_cells, bitorder="little").astype(np.bool_)
        masks.append(
            StrataMask(
                attribute=entry["attribute"],
                stratum=entry["stratum"],
                grid_shape=(n_lat, n_lon),
                bits=bits.reshape(n_lat, n_lon),
            )
        )
    out = MaskSet(
        grid_fingerprint=header["grid_fingerprint"],
        catalog_fingerprint=header["catalog_fingerprint"],
        masks=masks,
    )
    if grid is not None:
        out.require_grid(grid)
    return out
