"""Command-line pipeline.

Commands: ``areas`` (cell areas / latitude weights), ``stratify``
(membership masks + counts), ``evaluate`` (per-stratum RMSE scores),
``fairness`` (fairness report + wide tables), ``synth`` (self-contained
synthetic workspace for demos and end-to-end tests).

Conventions: options may come from a ``key = value`` config file
(``--config``), with command-line flags winning; logs go to stderr and
data goes to files; every output file is written to a temp name and
renamed, so failures never leave partial outputs; exit codes are 0 on
success, 2 for configuration/input problems, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .boundaries import build_catalog, load_attribute_tables, load_boundaries
from .datastore import (
    ForecastBundle,
    SynthSpec,
    TruthBundle,
    read_bundle,
    region_errors_from_masks,
    synth_bundle,
    write_bundle,
)
from .errors import StratcastError
from .fairness import FairnessReport, measure_fairness, write_fairness_curves
from .geodesy import (
    SpheroidParams,
    latitude_weights,
    polar_overestimate,
    total_surface_area,
    write_weights_csv,
)
from .grid import build_grid
from .metrics import ScoreTable, gridpoint_rmse, stratified_rmse
from .stratify import assign_strata, load_masks, membership_counts, save_masks

log = logging.getLogger("stratcast")

WIDE_METRICS = ("gad", "variance")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def load_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise StratcastError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class _Options:
    """Flag-over-config resolution for one command invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=str):
        value = getattr(self.args, key.replace(".", "_"), None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            return default
        if not isinstance(value, str):
            return value
        try:
            return cast(value)
        except ValueError as exc:
            raise StratcastError(f"bad value for option {key!r}: {value!r} ({exc})") from exc

    def require(self, key: str, cast=str):
        value = self.get(key, cast=cast)
        if value is None:
            raise StratcastError(f"missing required option {key!r} (flag or config)")
        return value


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _parse_lead_times(text: str) -> list[int]:
    """Comma list ('12,24') or start:stop:step ('12:240:12'), inclusive."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (int(x) for x in text.split(":"))
        return list(range(start, stop + 1, step))
    return [int(x) for x in text.split(",") if x.strip()]


def _default_cache_path() -> Path:
    cache_dir = os.environ.get("SAFE_CACHE_DIR")
    return Path(cache_dir) / "masks.safeb" if cache_dir else Path("masks.safeb")


# ---------------------------------------------------------------- areas

def cmd_areas(opts: _Options) -> int:
    resolution = opts.require("resolution", cast=float)
    model = opts.get("model", "oblate")
    out_path = Path(opts.get("out", "weights.csv"))
    params = SpheroidParams()
    grid = build_grid(resolution)
    weights = latitude_weights(grid, params, model=model)
    tmp = out_path.with_name(out_path.name + ".tmp")
    write_weights_csv(weights, grid, tmp)
    tmp.replace(out_path)
    total = total_surface_area(params if model == "oblate" else params.as_sphere())
    print(f"total_surface_area_m2={total:.17g}")
    print(f"mean_cell_area_m2={total / (grid.n_lat * grid.n_lon):.17g}")
    if opts.get("compare_sphere", False, cast=_parse_bool):
        print(f"polar_overestimate_pct={polar_overestimate(resolution, params):.17g}")
    log.info("wrote %s (%d latitudes, model=%s)", out_path, grid.n_lat, model)
    return 0


# ------------------------------------------------------------- stratify

def _build_catalog_from_opts(opts: _Options):
    boundaries_dir = opts.require("boundaries")
    subregions_csv = opts.require("subregions")
    income_csv = opts.require("income")
    strict = opts.get("strict", False, cast=_parse_bool)
    records = load_boundaries(boundaries_dir, strict=strict)
    subregions, income = load_attribute_tables(subregions_csv, income_csv)
    return build_catalog(records, subregions, income)


def _snapshot_mtime(opts: _Options) -> float:
    paths = [Path(opts.require("boundaries")), Path(opts.require("subregions")),
             Path(opts.require("income"))]
    stamps = []
    for p in paths:
        if p.is_dir():
            stamps.extend(f.stat().st_mtime for f in p.glob("*.geojson"))
        elif p.exists():
            stamps.append(p.stat().st_mtime)
    return max(stamps) if stamps else 0.0


def cmd_stratify(opts: _Options) -> int:
    resolution = opts.require("resolution", cast=float)
    masks_path = Path(opts.get("out_masks") or _default_cache_path())
    counts_path = Path(opts.get("out_counts", "membership_counts.csv"))
    grid = build_grid(resolution)
    catalog = _build_catalog_from_opts(opts)
    masks_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(masks_path.parent / "catalog.json", catalog.to_json())

    masks = None
    if masks_path.exists():
        try:
            cached = load_masks(masks_path)
            fresh = masks_path.stat().st_mtime >= _snapshot_mtime(opts)
            if (
                fresh
                and cached.grid_fingerprint == grid.fingerprint()
                and cached.catalog_fingerprint == catalog.fingerprint()
            ):
                log.info("mask cache hit: %s", masks_path)
                masks = cached
            else:
                log.info("mask cache stale; recomputing")
        except StratcastError as exc:
            log.warning("mask cache unreadable (%s); recomputing", exc)

    if masks is None:
        masks = assign_strata(grid, catalog)
        save_masks(masks, masks_path)
        log.info("wrote %s", masks_path)

    lines = ["attribute,stratum,gridpoints"]
    for attribute, stratum, count in membership_counts(masks):
        lines.append(f"{attribute},{_csv_quote(stratum)},{count}")
    _atomic_write_text(counts_path, "\n".join(lines) + "\n")
    log.info("wrote %s (%d strata)", counts_path, len(masks.masks))
    return 0


def _csv_quote(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


# ------------------------------------------------------------- evaluate

def _collect_pred_specs(opts: _Options) -> list[tuple[str, Path]]:
    """Model bundles from repeated --pred name=dir flags or pred.NAME config keys."""
    specs: list[tuple[str, Path]] = []
    for item in getattr(opts.args, "pred", None) or []:
        if "=" not in item:
            raise StratcastError(f"--pred expects NAME=DIR, got {item!r}")
        name, _, path = item.partition("=")
        specs.append((name.strip(), Path(path.strip())))
    if not specs:
        for key in opts.config:
            if key.startswith("pred."):
                specs.append((key[len("pred."):], Path(opts.config[key])))
    if not specs:
        raise StratcastError("no prediction bundles given (--pred NAME=DIR)")
    return specs


def cmd_evaluate(opts: _Options) -> int:
    resolution = opts.require("resolution", cast=float)
    masks_path = Path(opts.get("masks") or _default_cache_path())
    truth_root = Path(opts.require("truth"))
    out_path = Path(opts.get("out", "scores.csv"))
    model = opts.get("model", "oblate")
    variables = [v.strip() for v in opts.require("variables").split(",") if v.strip()]
    lead_filter = opts.get("lead_times", cast=_parse_lead_times)
    raster_lead = opts.get("raster_lead", cast=int)
    raster_out = opts.get("raster_out")

    grid = build_grid(resolution)
    weights = latitude_weights(grid, SpheroidParams(), model=model)
    masks = load_masks(masks_path, grid)
    pred_specs = _collect_pred_specs(opts)

    rows = []
    for model_name, pred_root in pred_specs:
        for variable in variables:
            pred = read_bundle(pred_root / variable)
            if not isinstance(pred, ForecastBundle):
                raise StratcastError(f"{pred_root / variable}: expected a forecast bundle")
            truth = read_bundle(truth_root / variable)
            if not isinstance(truth, TruthBundle):
                raise StratcastError(f"{truth_root / variable}: expected a truth bundle")
            leads = None
            if lead_filter is not None:
                leads = [h for h in lead_filter if h in pred.lead_times_h]
                if not leads:
                    raise StratcastError(
                        f"none of the requested lead times exist in {pred_root / variable}"
                    )
            table = stratified_rmse(
                pred, truth, masks, weights,
                model=model_name, lead_times_h=leads, on_missing_truth="skip",
            )
            n_pairs = sum({r.lead_time_h: r.n_times for r in table.rows}.values())
            log.info(
                "%s/%s: scored %d strata x %d leads (%d init/lead pairs)",
                model_name, variable, len(masks.masks),
                len(leads or pred.lead_times_h), n_pairs,
            )
            rows.extend(table.rows)
            if raster_lead is not None and raster_out is not None:
                raster = gridpoint_rmse(pred, truth, raster_lead)
                bundle = TruthBundle(
                    variable=f"{variable}_rmse_{raster_lead}h",
                    units=pred.units,
                    valid_times=(pred.init_times[0],),
                    values=raster.values[None, :, :],
                    grid_fingerprint=raster.grid_fingerprint,
                )
                write_bundle(bundle, Path(raster_out) / model_name / variable)

    table = ScoreTable(rows)
    tmp = out_path.with_name(out_path.name + ".tmp")
    table.to_csv(tmp)
    tmp.replace(out_path)
    log.info("wrote %s (%d rows)", out_path, len(rows))
    return 0


# ------------------------------------------------------------- fairness

def build_wide_table(
    report: FairnessReport, attribute: str, metric: str
) -> tuple[list[str], list[list[str]]]:
    """Benchmark-style wide table: rows variable x lead, one column per model.

    The most-fair (smallest) model is recorded in a ``best_model`` column,
    decided at full precision before the 4-decimal display rounding; ties
    go to the earliest model column.
    """
    models: list[str] = []
    cells: dict[tuple[str, int], dict[str, float]] = {}
    variables: list[str] = []
    for r in report.rows:
        if r.attribute != attribute:
            continue
        if r.model not in models:
            models.append(r.model)
        if r.variable not in variables:
            variables.append(r.variable)
        cells.setdefault((r.variable, r.lead_time_h), {})[r.model] = getattr(r, metric)
    header = ["variable", "lead_time_h", *models, "best_model"]
    rows = []
    for variable in variables:
        leads = sorted({lead for (v, lead) in cells if v == variable})
        for lead in leads:
            row_vals = cells[(variable, lead)]
            best = min(
                (m for m in models if m in row_vals),
                key=lambda m: (row_vals[m], models.index(m)),
            )
            rows.append(
                [variable, str(lead)]
                + [f"{row_vals[m]:.4f}" if m in row_vals else "" for m in models]
                + [best]
            )
    return header, rows


def render_wide_csv(header: list[str], rows: list[list[str]]) -> str:
    return "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"


def parse_wide_csv(text: str) -> tuple[list[str], list[list[str]]]:
    lines = text.strip("\n").split("\n")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def cmd_fairness(opts: _Options) -> int:
    scores_path = Path(opts.require("scores"))
    out_path = Path(opts.get("out", "fairness.csv"))
    filter_outliers = opts.get("filter_outliers", False, cast=_parse_bool)
    wide_dir = opts.get("wide_dir")
    curves_path = opts.get("curves")

    scores = ScoreTable.from_csv(scores_path)
    report = measure_fairness(scores, filter_outliers=filter_outliers)
    tmp = out_path.with_name(out_path.name + ".tmp")
    report.to_csv(tmp)
    tmp.replace(out_path)
    log.info("wrote %s (%d rows)", out_path, len(report.rows))

    if wide_dir is not None:
        wd = Path(wide_dir)
        wd.mkdir(parents=True, exist_ok=True)
        attributes = []
        for r in report.rows:
            if r.attribute not in attributes:
                attributes.append(r.attribute)
        for attribute in attributes:
            for metric in WIDE_METRICS:
                header, rows = build_wide_table(report, attribute, metric)
                _atomic_write_text(
                    wd / f"wide_{attribute}_{metric}.csv", render_wide_csv(header, rows)
                )
        log.info("wrote wide tables for %d attributes under %s", len(attributes), wd)
    if curves_path is not None:
        tmp_curves = Path(curves_path).with_name(Path(curves_path).name + ".tmp")
        write_fairness_curves(report, tmp_curves)
        tmp_curves.replace(Path(curves_path))
        log.info("wrote %s", curves_path)
    return 0


# ---------------------------------------------------------------- synth

DEMO_TERRITORIES = [
    # (territory_id, display_name, lon_lo, lat_lo, lon_hi, lat_hi, subregion, income)
    ("AAA", "Arcadia", -150.0, 10.0, -120.0, 40.0, "west", "high"),
    ("BBB", "Borealis", -60.0, -35.0, -30.0, -5.0, "west", "upper_middle"),
    ("CCC", "Cydonia", 30.0, 20.0, 60.0, 50.0, "east", "lower_middle"),
    ("DDD", "Dorado", 120.0, -50.0, 150.0, -20.0, "east", "low"),
]

VARIABLE_PARAMS = {
    "T850": ("K", 250.0, 10.0),
    "Z500": ("m2 s-2", 54000.0, 2000.0),
}


def demo_bias(model_idx: int, territory_idx: int) -> float:
    """Planted error magnitude; dyadic so scores recover it exactly."""
    return 2.0 ** (((territory_idx + model_idx) % 4) - 1)


def write_demo_boundaries(out_dir: Path) -> None:
    features = []
    for tid, name, lon_lo, lat_lo, lon_hi, lat_hi, _, _ in DEMO_TERRITORIES:
        ring = [
            [lon_lo, lat_lo], [lon_hi, lat_lo], [lon_hi, lat_hi],
            [lon_lo, lat_hi], [lon_lo, lat_lo],
        ]
        features.append(
            {
                "type": "Feature",
                "properties": {"territory_id": tid, "display_name": name},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    bdir = out_dir / "boundaries"
    bdir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(bdir / "territories.geojson", json.dumps(doc, indent=1, sort_keys=True))
    _atomic_write_text(
        out_dir / "subregions.csv",
        "territory_id,subregion\n"
        + "".join(f"{t[0]},{t[6]}\n" for t in DEMO_TERRITORIES),
    )
    _atomic_write_text(
        out_dir / "income.csv",
        "territory_id,income_class\n"
        + "".join(f"{t[0]},{t[7]}\n" for t in DEMO_TERRITORIES),
    )


def cmd_synth(opts: _Options) -> int:
    out_dir = Path(opts.require("out"))
    resolution = opts.get("resolution", 1.5, cast=float)
    n_init = opts.get("inits", 4, cast=int)
    leads = opts.get("leads", "12:48:12", cast=_parse_lead_times)
    variables = [v.strip() for v in opts.get("variables", "T850").split(",") if v.strip()]
    models = [m.strip() for m in opts.get("models", "alpha,beta").split(",") if m.strip()]
    seed = opts.get("seed", 7, cast=int)

    grid = build_grid(resolution)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_demo_boundaries(out_dir)
    records = load_boundaries(out_dir / "boundaries")
    subregions, income = load_attribute_tables(
        out_dir / "subregions.csv", out_dir / "income.csv"
    )
    catalog = build_catalog(records, subregions, income)
    masks = assign_strata(grid, catalog)

    for v_idx, variable in enumerate(variables):
        units, offset, amplitude = VARIABLE_PARAMS.get(variable, ("1", 100.0, 5.0))
        for m_idx, model_name in enumerate(models):
            magnitudes = {
                name: demo_bias(m_idx, t_idx)
                for t_idx, (_, name, *_rest) in enumerate(DEMO_TERRITORIES)
            }
            spec = SynthSpec(
                variable=variable,
                units=units,
                n_init=n_init,
                lead_times_h=tuple(leads),
                region_errors=region_errors_from_masks(masks, "territory", magnitudes),
                base_offset=offset,
                base_amplitude=amplitude,
            )
            forecast, truth = synth_bundle(grid, spec, seed=seed * 1000 + v_idx)
            write_bundle(forecast, out_dir / "pred" / model_name / variable)
            if m_idx == 0:
                write_bundle(truth, out_dir / "truth" / variable)
    log.info(
        "synth workspace at %s: %d models x %d variables, %d inits, %d leads",
        out_dir, len(models), len(variables), n_init, len(leads),
    )
    return 0


# ----------------------------------------------------------------- main

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratcast",
        description="Stratified, area-weighted evaluation of gridded Earth forecasts",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("areas", help="cell areas and latitude weights")
    _add_common(p)
    p.add_argument("--resolution", type=float)
    p.add_argument("--model", choices=["oblate", "sphere"])
    p.add_argument("--out")
    p.add_argument("--compare-sphere", action="store_true", default=None,
                   dest="compare_sphere")
    p.set_defaults(func=cmd_areas)

    p = sub.add_parser("stratify", help="compute and cache membership masks")
    _add_common(p)
    p.add_argument("--resolution", type=float)
    p.add_argument("--boundaries")
    p.add_argument("--subregions")
    p.add_argument("--income")
    p.add_argument("--out-masks", dest="out_masks")
    p.add_argument("--out-counts", dest="out_counts")
    p.add_argument("--strict", action="store_true", default=None)
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("evaluate", help="per-stratum RMSE scores")
    _add_common(p)
    p.add_argument("--resolution", type=float)
    p.add_argument("--masks")
    p.add_argument("--truth")
    p.add_argument("--pred", action="append", metavar="NAME=DIR")
    p.add_argument("--variables")
    p.add_argument("--lead-times", dest="lead_times")
    p.add_argument("--model", choices=["oblate", "sphere"])
    p.add_argument("--out")
    p.add_argument("--raster-lead", dest="raster_lead", type=int)
    p.add_argument("--raster-out", dest="raster_out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fairness", help="fairness report and wide tables")
    _add_common(p)
    p.add_argument("--scores")
    p.add_argument("--out")
    p.add_argument("--filter-outliers", action="store_true", default=None,
                   dest="filter_outliers")
    p.add_argument("--wide-dir", dest="wide_dir")
    p.add_argument("--curves")
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("synth", help="generate a synthetic demo workspace")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--resolution", type=float)
    p.add_argument("--inits", type=int)
    p.add_argument("--leads")
    p.add_argument("--variables")
    p.add_argument("--models")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(_Options(args))
    except (StratcastError, FileNotFoundError, NotADirectoryError) as exc:
        log.error("%s", exc)
        return 2
    except Exception:  # pragma: no cover - internal failure path
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
