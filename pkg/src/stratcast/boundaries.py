"""Territory boundary ingestion and the attribute -> strata catalog.

Boundary geometry comes from local GeoJSON snapshots (RFC 7946, WGS84
lon/lat order); subregion and income metadata come from two CSV tables.
The catalog groups territories into strata for four attributes:

* ``territory``  - one stratum per territory;
* ``subregion``  - territories grouped by their subregion label;
* ``income``     - territories grouped by income class (absent class
  means the territory joins no income stratum);
* ``landcover``  - ``land`` (union of every territory) and ``water``
  (the implicit complement, resolved during stratification).
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from shapely.geometry import MultiPolygon, Polygon, shape
from shapely.validation import make_valid

from .errors import CompletenessError, ConflictError, SchemaError

log = logging.getLogger(__name__)

ATTRIBUTES = ("territory", "subregion", "income", "landcover")


class IncomeClass(str, enum.Enum):
    HIGH = "high"
    UPPER_MIDDLE = "upper_middle"
    LOWER_MIDDLE = "lower_middle"
    LOW = "low"


@dataclass(frozen=True)
class TerritoryRecord:
    territory_id: str
    display_name: str
    geometry: MultiPolygon
    subregion: str | None = None
    income_class: IncomeClass | None = None


@dataclass(frozen=True)
class Stratum:
    attribute: str
    name: str
    territory_ids: tuple[str, ...]
    # "water" has no member geometry; membership is resolved as the
    # complement of full containment in land during stratification.
    implicit_complement: bool = False


@dataclass
class AttributeCatalog:
    records: dict[str, TerritoryRecord]
    attributes: dict[str, list[Stratum]]

    def strata(self, attribute: str) -> list[Stratum]:
        return self.attributes[attribute]

    def all_strata(self) -> list[Stratum]:
        return [s for attr in ATTRIBUTES for s in self.attributes[attr]]

    def geometries_of(self, stratum: Stratum) -> list[MultiPolygon]:
        return [self.records[tid].geometry for tid in stratum.territory_ids]

    def to_json(self) -> str:
        """Canonical serialization: attribute -> strata -> territory refs."""
        doc = {
            "attributes": {
                attr: [
                    {
                        "name": s.name,
                        "territories": list(s.territory_ids),
                        "implicit_complement": s.implicit_complement,
                    }
                    for s in strata
                ]
                for attr, strata in self.attributes.items()
            },
            "territories": [
                {
                    "territory_id": r.territory_id,
                    "display_name": r.display_name,
                    "subregion": r.subregion,
                    "income_class": r.income_class.value if r.income_class else None,
                }
                for r in self.records.values()
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        geom_hash = hashlib.sha256()
        for r in self.records.values():
            geom_hash.update(r.territory_id.encode())
            geom_hash.update(r.geometry.wkb)
        meta_hash = hashlib.sha256(self.to_json().encode()).hexdigest()
        return f"catalog:{meta_hash[:16]}:{geom_hash.hexdigest()[:16]}"


def _as_multipolygon(geom, locus: str, strict: bool) -> MultiPolygon:
    if isinstance(geom, Polygon):
        geom = MultiPolygon([geom])
    if not isinstance(geom, MultiPolygon):
        raise SchemaError(f"{locus}: geometry must be Polygon or MultiPolygon, got {geom.geom_type}")
    if geom.is_empty:
        raise SchemaError(f"{locus}: empty geometry")
    if not geom.is_valid:
        if strict:
            raise SchemaError(f"{locus}: invalid geometry (self-intersection?) in strict mode")
        log.warning("%s: repairing invalid geometry", locus)
        repaired = make_valid(geom)
        polys = []
        for part in getattr(repaired, "geoms", [repaired]):
            if isinstance(part, Polygon):
                polys.append(part)
            elif isinstance(part, MultiPolygon):
                polys.extend(part.geoms)
        if not polys:
            raise SchemaError(f"{locus}: geometry vanished during repair")
        geom = MultiPolygon(polys)
    minx, miny, maxx, maxy = geom.bounds
    if minx < -180.0 or maxx > 180.0 or miny < -90.0 or maxy > 90.0:
        raise SchemaError(
            f"{locus}: coordinates outside [-180,180]x[-90,90] (bounds {geom.bounds})"
        )
    return geom


def _parse_feature(feature: dict, locus: str, strict: bool) -> TerritoryRecord:
    props = feature.get("properties") or {}
    for key in ("territory_id", "display_name"):
        if key not in props or props[key] in (None, ""):
            raise SchemaError(f"{locus}: missing required property {key!r}")
    if "geometry" not in feature or feature["geometry"] is None:
        raise SchemaError(f"{locus}: feature has no geometry")
    geom = _as_multipolygon(shape(feature["geometry"]), locus, strict)
    return TerritoryRecord(
        territory_id=str(props["territory_id"]),
        display_name=str(props["display_name"]),
        geometry=geom,
    )


def load_boundaries(path: str | Path, strict: bool = False) -> list[TerritoryRecord]:
    """Parse all .geojson files in a directory (or one file) into records.

    Files may hold a single Feature or a FeatureCollection; record order
    follows sorted file order then feature order, so identical snapshots
    load identically.
    """
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.geojson"))
    if not files:
        raise SchemaError(f"no .geojson files found under {path}")
    records: list[TerritoryRecord] = []
    seen: set[str] = set()
    for fp in files:
        try:
            doc = json.loads(fp.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{fp}: not valid JSON ({exc})") from exc
        if doc.get("type") == "FeatureCollection":
            features = doc.get("features", [])
        elif doc.get("type") == "Feature":
            features = [doc]
        else:
            raise SchemaError(f"{fp}: expected Feature or FeatureCollection")
        for i, feature in enumerate(features):
            rec = _parse_feature(feature, f"{fp}[{i}]", strict)
            if rec.territory_id in seen:
                raise ConflictError(f"{fp}[{i}]: duplicate territory_id {rec.territory_id!r}")
            seen.add(rec.territory_id)
            records.append(rec)
    return records


def _read_two_column_csv(path: str | Path, value_column: str) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or set(reader.fieldnames) != {"territory_id", value_column}:
            raise SchemaError(
                f"{path}: expected header territory_id,{value_column}, got {reader.fieldnames}"
            )
        for row in reader:
            tid = row["territory_id"]
            if tid in out:
                raise ConflictError(f"{path}: duplicate territory_id {tid!r}")
            out[tid] = row[value_column]
    return out


def load_attribute_tables(
    subregion_csv: str | Path, income_csv: str | Path
) -> tuple[dict[str, str], dict[str, IncomeClass]]:
    """Subregion and income metadata keyed by territory_id.

    The income table may omit territories (they then join no income
    stratum); unknown income tokens are rejected.
    """
    subregions = _read_two_column_csv(subregion_csv, "subregion")
    income_raw = _read_two_column_csv(income_csv, "income_class")
    income: dict[str, IncomeClass] = {}
    for tid, token in income_raw.items():
        try:
            income[tid] = IncomeClass(token)
        except ValueError:
            raise SchemaError(
                f"{income_csv}: unknown income_class {token!r} for {tid!r} "
                f"(expected one of {[c.value for c in IncomeClass]})"
            ) from None
    return subregions, income


def build_catalog(
    records: list[TerritoryRecord],
    subregions: dict[str, str],
    income: dict[str, IncomeClass],
) -> AttributeCatalog:
    """Assemble the attribute -> strata catalog from records and metadata.

    Every territory must appear in the subregion table.  Income strata
    list only classified territories; the four income strata exist even
    when empty so the attribute always has a fixed shape.
    """
    enriched: dict[str, TerritoryRecord] = {}
    for rec in records:
        if rec.territory_id not in subregions:
            raise CompletenessError(
                f"territory {rec.territory_id!r} missing from the subregion table"
            )
        enriched[rec.territory_id] = replace(
            rec,
            subregion=subregions[rec.territory_id],
            income_class=income.get(rec.territory_id),
        )

    territory_strata = [
        Stratum("territory", r.display_name, (r.territory_id,)) for r in enriched.values()
    ]

    by_subregion: dict[str, list[str]] = {}
    for r in enriched.values():
        by_subregion.setdefault(r.subregion, []).append(r.territory_id)
    subregion_strata = [
        Stratum("subregion", name, tuple(by_subregion[name])) for name in sorted(by_subregion)
    ]

    income_strata = []
    for cls in IncomeClass:
        members = tuple(r.territory_id for r in enriched.values() if r.income_class is cls)
        income_strata.append(Stratum("income", cls.value, members))

    landcover_strata = [
        Stratum("landcover", "land", tuple(enriched)),
        Stratum("landcover", "water", (), implicit_complement=True),
    ]

    return AttributeCatalog(
        records=enriched,
        attributes={
            "territory": territory_strata,
            "subregion": subregion_strata,
            "income": income_strata,
            "landcover": landcover_strata,
        },
    )


def snapshot_report(catalog: AttributeCatalog, expected: dict | None = None) -> dict:
    """Counts and consistency notes for a loaded boundary snapshot.

    Data-level checks live here rather than in catalog invariants:
    whether the snapshot matches externally documented counts (e.g. how
    many territories carry an income class) is a property of the data,
    so mismatches against ``expected`` become warnings, never errors.
    Recognized ``expected`` keys mirror the returned count fields.
    """
    n_territories = len(catalog.records)
    classified = [r for r in catalog.records.values() if r.income_class is not None]
    per_class = {
        s.name: len(s.territory_ids) for s in catalog.attributes["income"]
    }
    warnings = []
    if expected:
        observed = {
            "territories": n_territories,
            "subregions": len(catalog.attributes["subregion"]),
            "territories_with_income": len(classified),
            "income_members": per_class,
        }
        for key, want in expected.items():
            got = observed.get(key)
            if got != want:
                warnings.append(f"snapshot {key} = {got}, documented value is {want}")
    if sum(per_class.values()) != len(classified):
        warnings.append(
            f"income class counts {per_class} sum to {sum(per_class.values())} "
            f"but {len(classified)} territories are classified"
        )
    return {
        "territories": n_territories,
        "subregions": len(catalog.attributes["subregion"]),
        "income_classes": sum(1 for s in catalog.attributes["income"] if s.territory_ids),
        "landcover": len(catalog.attributes["landcover"]),
        "income_members": per_class,
        "territories_with_income": len(classified),
        "warnings": warnings,
    }


def save_catalog(catalog: AttributeCatalog, path: str | Path) -> None:
    Path(path).write_text(catalog.to_json(), encoding="utf-8")
