"""Gridded forecast/truth bundles: a flat-binary container plus synthesis.

A bundle is a directory holding ``manifest.json`` and ``data.bin``.  The
manifest declares the axes; the payload is raw little-endian values in C
order, ``[init, lead, lat, lon]`` for forecasts and ``[time, lat, lon]``
for truth (truth reuses the ``init_times`` key for its valid times).
Missing data is NaN and survives round-trips bit-for-bit.

Longitude axes are normalized on read to the grid module's convention
(index 0 at 0, wrap from 180 to -180 mid-array); a manifest may declare
any cyclic ordering of the same gridpoints, e.g. ascending 0..358.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import BundleFormatError, FingerprintError, SchemaError
from .grid import EquiangularGrid, build_grid
from .stratify import MaskSet

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def parse_time(iso: str) -> datetime:
    dt = datetime.fromisoformat(iso.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ForecastBundle:
    variable: str
    units: str
    init_times: tuple[str, ...]
    lead_times_h: tuple[int, ...]
    values: np.ndarray = field(repr=False)  # [init, lead, lat, lon]
    grid_fingerprint: str = ""

    def init_datetimes(self) -> list[datetime]:
        return [parse_time(t) for t in self.init_times]


@dataclass(frozen=True)
class TruthBundle:
    variable: str
    units: str
    valid_times: tuple[str, ...]
    values: np.ndarray = field(repr=False)  # [time, lat, lon]
    grid_fingerprint: str = ""

    def valid_datetimes(self) -> list[datetime]:
        return [parse_time(t) for t in self.valid_times]

    def slice_at(self, valid: datetime) -> np.ndarray:
        for i, t in enumerate(self.valid_datetimes()):
            if t == valid:
                return self.values[i]
        raise KeyError(f"no truth slice at valid time {format_time(valid)}")


def _normalize_lon(manifest_lon: np.ndarray, grid: EquiangularGrid) -> np.ndarray:
    """Permutation mapping package lon order -> manifest lon order."""
    wrapped = np.mod(manifest_lon, 360.0)
    target = np.mod(grid.lon_values, 360.0)
    order = {}
    for j, v in enumerate(wrapped):
        order.setdefault(round(float(v), 9), j)
    try:
        perm = np.array([order[round(float(v), 9)] for v in target], dtype=np.intp)
    except KeyError as exc:
        raise BundleFormatError(f"longitude axis does not cover gridpoint {exc}") from exc
    if len(set(perm.tolist())) != len(perm):
        raise BundleFormatError("longitude axis has duplicate gridpoints")
    return perm


def _grid_from_axes(lat: np.ndarray, lon: np.ndarray) -> tuple[EquiangularGrid, np.ndarray]:
    if lat.ndim != 1 or len(lat) < 2 or np.any(np.diff(lat) <= 0):
        raise BundleFormatError("latitude axis must be strictly ascending")
    res = 180.0 / (len(lat) - 1)
    grid = build_grid(res)
    if len(lon) != grid.n_lon or not np.array_equal(grid.lat_values, lat):
        raise BundleFormatError(
            f"axes are not the {res:g}-degree equiangular grid with poles"
        )
    perm = _normalize_lon(lon, grid)
    return grid, perm


def read_bundle(path: str | Path) -> ForecastBundle | TruthBundle:
    """Load and validate a bundle; returns truth when lead_times_h is absent."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    data_path = path / "data.bin"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise BundleFormatError(f"{path}: missing manifest.json") from None
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc

    for key in ("variable", "units", "init_times", "lat", "lon", "dtype", "layout"):
        if key not in manifest:
            raise BundleFormatError(f"{manifest_path}: missing key {key!r}")
    dtype = manifest["dtype"]
    if dtype not in _DTYPES:
        raise BundleFormatError(f"{manifest_path}: unknown dtype {dtype!r}")

    lat = np.asarray(manifest["lat"], dtype=np.float64)
    lon = np.asarray(manifest["lon"], dtype=np.float64)
    grid, perm = _grid_from_axes(lat, lon)
    declared = manifest.get("grid_fingerprint", "")
    if declared and declared != grid.fingerprint():
        raise FingerprintError(
            f"{manifest_path}: grid_fingerprint {declared} does not match axes "
            f"({grid.fingerprint()})"
        )

    times = tuple(str(t) for t in manifest["init_times"])
    parsed = [parse_time(t) for t in times]
    if any(b <= a for a, b in zip(parsed, parsed[1:])):
        raise BundleFormatError(f"{manifest_path}: init_times must be strictly increasing")

    is_forecast = "lead_times_h" in manifest
    if is_forecast:
        leads = tuple(int(h) for h in manifest["lead_times_h"])
        if any(b <= a for a, b in zip(leads, leads[1:])):
            raise BundleFormatError(f"{manifest_path}: lead_times_h must be strictly increasing")
        shape = (len(times), len(leads), grid.n_lat, grid.n_lon)
    else:
        shape = (len(times), grid.n_lat, grid.n_lon)

    expected = int(np.prod(shape)) * np.dtype(_DTYPES[dtype]).itemsize
    payload = data_path.read_bytes()
    if len(payload) != expected:
        raise BundleFormatError(
            f"{data_path}: payload is {len(payload)} bytes, manifest implies {expected}"
        )
    values = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(shape)
    values = np.ascontiguousarray(values[..., perm])  # lon axis to package order
    dead = np.isnan(values).all(axis=(-2, -1))
    if dead.any():
        raise BundleFormatError(
            f"{data_path}: {int(dead.sum())} time slices are entirely NaN"
        )

    if is_forecast:
        return ForecastBundle(
            variable=manifest["variable"],
            units=manifest["units"],
            init_times=times,
            lead_times_h=leads,
            values=values,
            grid_fingerprint=grid.fingerprint(),
        )
    return TruthBundle(
        variable=manifest["variable"],
        units=manifest["units"],
        valid_times=times,
        values=values,
        grid_fingerprint=grid.fingerprint(),
    )


def write_bundle(bundle: ForecastBundle | TruthBundle, path: str | Path) -> None:
    """Write manifest.json + data.bin so that read(write(b)) == b bit-exact."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    is_forecast = isinstance(bundle, ForecastBundle)
    times = bundle.init_times if is_forecast else bundle.valid_times

    fp = bundle.grid_fingerprint
    grid = _grid_for_fingerprint(fp, bundle.values.shape[-2:])
    dtype = "float64" if bundle.values.dtype == np.float64 else "float32"
    manifest = {
        "variable": bundle.variable,
        "units": bundle.units,
        "init_times": list(times),
        "lat": [float(v) for v in grid.lat_values],
        "lon": [float(v) for v in grid.lon_values],
        "dtype": dtype,
        "layout": "C-order [init, lead, lat, lon]" if is_forecast else "C-order [time, lat, lon]",
        "grid_fingerprint": grid.fingerprint(),
    }
    if is_forecast:
        manifest["lead_times_h"] = list(bundle.lead_times_h)

    tmp_manifest = path / "manifest.json.tmp"
    tmp_manifest.write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    tmp_manifest.replace(path / "manifest.json")
    tmp_data = path / "data.bin.tmp"
    tmp_data.write_bytes(np.ascontiguousarray(bundle.values, dtype=_DTYPES[dtype]).tobytes())
    tmp_data.replace(path / "data.bin")


def _grid_for_fingerprint(fingerprint: str, shape: tuple[int, int]) -> EquiangularGrid:
    n_lat, _ = shape
    grid = build_grid(180.0 / (n_lat - 1))
    if fingerprint and fingerprint != grid.fingerprint():
        raise FingerprintError(
            f"bundle fingerprint {fingerprint} does not match its own grid shape"
        )
    return grid


@dataclass(frozen=True)
class RegionError:
    """Constant additive forecast error painted over a gridpoint set."""

    name: str
    mask: np.ndarray = field(repr=False)
    magnitude: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic synthetic forecast/truth pair."""

    variable: str = "T850"
    units: str = "K"
    n_init: int = 4
    first_init: str = "2020-01-01T00:00:00Z"
    init_step_h: int = 12
    lead_times_h: tuple[int, ...] = (12, 24, 36, 48)
    region_errors: tuple[RegionError, ...] = ()
    base_offset: float = 250.0
    base_amplitude: float = 10.0


def region_errors_from_masks(
    masks: MaskSet, attribute: str, magnitudes: dict[str, float]
) -> tuple[RegionError, ...]:
    """Resolve stratum names to mask regions; unknown strata are rejected."""
    out = []
    for name, mag in magnitudes.items():
        try:
            mask = masks[(attribute, name)]
        except KeyError:
            raise SchemaError(f"unknown stratum {name!r} for attribute {attribute!r}") from None
        out.append(RegionError(name=name, mask=mask.bits, magnitude=float(mag)))
    return tuple(out)


def synth_bundle(
    grid: EquiangularGrid, spec: SynthSpec, seed: int
) -> tuple[ForecastBundle, TruthBundle]:
    """Deterministic synthetic pair with planted per-region forecast errors.

    The truth field is a smooth random function of (lon, lat, time)
    quantized to multiples of 2^-20 so that adding a dyadic error
    magnitude (0.5, 1.0, 2.0, ...) is exact in float64 and the planted
    per-region RMSE is recoverable bit-for-bit.
    """
    rng = np.random.default_rng(seed)
    for region in spec.region_errors:
        if region.mask.shape != (grid.n_lat, grid.n_lon):
            raise SchemaError(f"region {region.name!r} mask shape does not match grid")

    first = parse_time(spec.first_init)
    init_dts = [first + timedelta(hours=spec.init_step_h * i) for i in range(spec.n_init)]
    valid_hours = sorted(
        {
            spec.init_step_h * i + lead
            for i in range(spec.n_init)
            for lead in spec.lead_times_h
        }
    )
    valid_dts = [first + timedelta(hours=h) for h in valid_hours]

    lon_r = np.radians(np.mod(grid.lon_values, 360.0))[None, :]
    lat_r = np.radians(grid.lat_values)[:, None]
    k = rng.integers(1, 4, size=3)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    amp = rng.uniform(0.3, 1.0, size=3) * spec.base_amplitude
    drift = rng.uniform(0.005, 0.02)

    def field_at(hours: float) -> np.ndarray:
        f = np.full((grid.n_lat, grid.n_lon), spec.base_offset)
        for kk, ph, am in zip(k, phase, amp):
            f = f + am * np.sin(kk * lon_r + ph) * np.cos(lat_r) ** int(kk)
        f = f + drift * hours * np.cos(lat_r)
        return np.round(f * 2**20) / 2**20  # dyadic quantization

    truth_values = np.stack([field_at(h) for h in valid_hours])

    error_field = np.zeros((grid.n_lat, grid.n_lon))
    for region in spec.region_errors:  # later regions win on overlap
        error_field[region.mask] = region.magnitude

    valid_index = {h: i for i, h in enumerate(valid_hours)}
    pred = np.empty((spec.n_init, len(spec.lead_times_h), grid.n_lat, grid.n_lon))
    for i in range(spec.n_init):
        for l, lead in enumerate(spec.lead_times_h):
            pred[i, l] = truth_values[valid_index[spec.init_step_h * i + lead]] + error_field

    fp = grid.fingerprint()
    forecast = ForecastBundle(
        variable=spec.variable,
        units=spec.units,
        init_times=tuple(format_time(t) for t in init_dts),
        lead_times_h=tuple(spec.lead_times_h),
        values=pred,
        grid_fingerprint=fp,
    )
    truth = TruthBundle(
        variable=spec.variable,
        units=spec.units,
        valid_times=tuple(format_time(t) for t in valid_dts),
        values=truth_values,
        grid_fingerprint=fp,
    )
    return forecast, truth
