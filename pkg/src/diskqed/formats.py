"""CSV tables, strict JSON run configuration and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .experiments import AnticrossingMap, SaturationCurve, TuningSchedule, empty_cavity_calibration
from .model import JSON_KEYS, DriveSpec, SystemParams, table_ii
from .solver import Spectrum
from .units import NM

FLOAT_FORMAT = ".17g"
SPECTRUM_COLUMNS = ("detuning_pm", "detuning_omega_rad_s", "transmission", "reflection", "n_cw", "n_ccw", "exciton", "n_cav", "truncated")


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending key or line."""


# ---------------------------------------------------------------- CSV


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), FLOAT_FORMAT)


@dataclass
class Table:
    columns: dict  # name -> 1-D array, insertion order is column order
    comments: list = field(default_factory=list)  # lines without the leading '# '

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


def write_table(table: Table, path) -> None:
    names = list(table.columns)
    arrays = [np.asarray(table.columns[n]) for n in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("table columns have different lengths")
    lines = [f"# {c}" for c in table.comments]
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(format_value(a[i]) for a in arrays))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path) -> Table:
    comments, header, rows = [], None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                comments.append(line[2:] if line.startswith("# ") else line[1:])
                continue
            if not line.strip():
                continue
            if header is None:
                header = [h.strip() for h in line.split(",")]
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if header is None:
        raise ConfigError(f"{path}: no header row")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Table({h: data[:, k] for k, h in enumerate(header)}, comments)


def _comment_value(comments, key):
    prefix = key + "="
    for c in comments:
        if c.startswith(prefix):
            return c[len(prefix):]
    return None


def spectrum_table(spec: Spectrum, comments=()) -> Table:
    cols = {
        "detuning_pm": spec.detuning_pm,
        "detuning_omega_rad_s": spec.detuning_omega,
        "transmission": spec.transmission,
        "reflection": spec.reflection,
        "n_cw": spec.n_cw,
        "n_ccw": spec.n_ccw,
        "exciton": spec.exciton,
        "n_cav": spec.n_cav,
        "truncated": spec.truncated,
    }
    head = [
        "kind=spectrum",
        f"wavelength_nm={format_value(spec.wavelength / NM)}",
        f"method={spec.meta.get('method', 'unknown')}",
        "units: detuning_pm laser minus exciton wavelength [pm]; detuning_omega_rad_s laser minus exciton [rad/s]; "
        "transmission and reflection normalized to input power at the coupling region",
    ]
    return Table(cols, head + list(comments))


def write_spectrum_csv(spec: Spectrum, path, comments=()) -> None:
    write_table(spectrum_table(spec, comments), path)


def read_spectrum_csv(path) -> tuple[Spectrum, list]:
    t = read_table(path)
    if "detuning_pm" not in t.columns or "transmission" not in t.columns:
        raise ConfigError(f"{path}: spectrum CSV needs detuning_pm and transmission columns")
    wl = _comment_value(t.comments, "wavelength_nm")
    n = len(t)
    get = lambda k: t.columns.get(k, np.full(n, np.nan))  # noqa: E731
    spec = Spectrum(
        detuning_pm=t.columns["detuning_pm"],
        transmission=t.columns["transmission"],
        reflection=get("reflection"),
        n_cw=get("n_cw"),
        n_ccw=get("n_ccw"),
        exciton=get("exciton"),
        wavelength=float(wl) * NM if wl is not None else 1297.5 * NM,
        truncated=get("truncated") > 0.5 if "truncated" in t.columns else None,
        meta={"method": _comment_value(t.comments, "method") or "ingested"},
    )
    return spec, t.comments


def anticrossing_table(m: AnticrossingMap, comments=()) -> Table:
    n_ca, n_la = m.transmission.shape
    return Table(
        {
            "detuning_ca_pm": np.repeat(m.detuning_ca_pm, n_la),
            "detuning_la_pm": np.tile(m.detuning_la_pm, n_ca),
            "transmission": m.transmission.ravel(),
            "reflection": m.reflection.ravel(),
        },
        ["kind=anticrossing"] + list(comments),
    )


def saturation_table(c: SaturationCurve, comments=()) -> Table:
    return Table(
        {
            "dropped_power_w": c.dropped_power,
            "n_cav": c.n_cav,
            "splitting_pm": c.splitting_pm,
            "peak_reflection": c.peak_reflection,
            "contrast": c.contrast,
            "truncated": c.truncated,
        },
        ["kind=saturation", f"contrast_offset_pm={format_value(c.contrast_offset_pm)}"] + list(comments),
    )


# ---------------------------------------------------------------- run configuration


def _check_keys(block: dict, allowed, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")


def _number(block, key, where, default=None, positive=False, allow_none=False):
    if key not in block:
        return default
    v = block[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v) or (positive and v <= 0):
        raise ConfigError(f"{where}.{key}: invalid value {v!r}")
    return v


@dataclass
class DriveConfig:
    input_power_nw: float | None = None
    photon_number: float | None = None  # empty-cavity taper calibration at the long-wavelength dip
    taper_transmission: float = 1.0

    def resolve(self, params: SystemParams) -> DriveSpec:
        if self.input_power_nw is not None:
            return DriveSpec(self.input_power_nw * 1e-9, params.wavelength, self.taper_transmission)
        n = 1e-3 if self.photon_number is None else self.photon_number
        return empty_cavity_calibration(params).drive_for(n, self.taper_transmission)


@dataclass
class GridConfig:
    points: int = 401
    span_kappa: float = 6.0
    start_pm: float | None = None
    stop_pm: float | None = None

    def resolve(self, params: SystemParams) -> np.ndarray:
        from .solver import default_grid

        if self.start_pm is not None:
            return np.linspace(self.start_pm, self.stop_pm, self.points)
        return default_grid(params, self.points, self.span_kappa)


@dataclass
class ScheduleConfig:
    mode: str = "linear"
    step_pm: float = 12.0
    steps: int = 20
    center_pm: float = 0.0
    coefficients_pm: list | None = None

    def resolve(self) -> TuningSchedule:
        if self.mode == "linear":
            return TuningSchedule.linear(self.step_pm, self.steps, self.center_pm)
        return TuningSchedule.quadratic(self.coefficients_pm, self.steps)


@dataclass
class SolverConfig:
    method: str = "weak"  # "weak" or "full"
    n_max: int = 8


@dataclass
class SweepConfig:
    photon_numbers: list = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0])
    detuning_ca_pm: float | None = None
    contrast_offset_pm: float | None = None


@dataclass
class FitConfig:
    free: list = field(default_factory=lambda: ["g_tw", "xi", "gamma_p"])
    seed: int = 0
    restarts: int = 3
    weights: list = field(default_factory=lambda: [1.0, 1.0])
    noise_sigma: float | None = None
    ssr_tolerance: float | None = None
    verify_full: bool = False
    data: list = field(default_factory=list)  # [{"csv": path, "detuning_ca_pm": x}]


@dataclass
class RunConfig:
    system: SystemParams = field(default_factory=table_ii)
    drive: DriveConfig = field(default_factory=DriveConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    def to_json_dict(self) -> dict:
        out = {"system": self.system.to_json_dict()}
        for name in ("drive", "grid", "schedule", "solver", "sweep", "fit"):
            out[name] = asdict(getattr(self, name))
        return out


BLOCKS = ("system", "drive", "grid", "schedule", "solver", "sweep", "fit")


def _parse_simple(cls, block, where):
    names = [f.name for f in fields(cls)]
    _check_keys(block, names, where)
    obj = cls()
    for f in fields(cls):
        if f.name not in block:
            continue
        v = block[f.name]
        current = getattr(obj, f.name)
        if isinstance(current, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{where}.{f.name}: expected true/false")
        elif isinstance(current, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{where}.{f.name}: expected an integer")
        elif isinstance(current, str):
            if not isinstance(v, str):
                raise ConfigError(f"{where}.{f.name}: expected a string")
        elif isinstance(current, list):
            if not isinstance(v, list):
                raise ConfigError(f"{where}.{f.name}: expected a list")
        elif isinstance(current, float) or current is None:
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float, list))):
                raise ConfigError(f"{where}.{f.name}: expected a number")
            if isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
        setattr(obj, f.name, v)
    return obj


def parse_run_config(data: dict) -> RunConfig:
    _check_keys(data, BLOCKS, "config")
    cfg = RunConfig()
    if "system" in data:
        _check_keys(data["system"], JSON_KEYS, "config.system")
        for k, v in data["system"].items():
            _number(data["system"], k, "config.system")
        try:
            # a partial block overrides the reference defaults key by key
            cfg.system = SystemParams.from_json_dict({**cfg.system.to_json_dict(), **data["system"]})
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"config.system: {exc}") from None
    cfg.drive = _parse_simple(DriveConfig, data.get("drive", {}), "config.drive")
    if cfg.drive.input_power_nw is not None and cfg.drive.photon_number is not None:
        raise ConfigError("config.drive: give input_power_nw or photon_number, not both")
    if not 0 < cfg.drive.taper_transmission <= 1:
        raise ConfigError("config.drive.taper_transmission: must lie in (0, 1]")
    cfg.grid = _parse_simple(GridConfig, data.get("grid", {}), "config.grid")
    if (cfg.grid.start_pm is None) != (cfg.grid.stop_pm is None):
        raise ConfigError("config.grid: start_pm and stop_pm go together")
    if cfg.grid.points < 5:
        raise ConfigError("config.grid.points: need at least 5")
    cfg.schedule = _parse_simple(ScheduleConfig, data.get("schedule", {}), "config.schedule")
    if cfg.schedule.mode not in ("linear", "quadratic"):
        raise ConfigError("config.schedule.mode: must be 'linear' or 'quadratic'")
    if cfg.schedule.mode == "quadratic" and (not cfg.schedule.coefficients_pm or len(cfg.schedule.coefficients_pm) != 3):
        raise ConfigError("config.schedule.coefficients_pm: quadratic mode needs three coefficients")
    cfg.solver = _parse_simple(SolverConfig, data.get("solver", {}), "config.solver")
    if cfg.solver.method not in ("weak", "full"):
        raise ConfigError("config.solver.method: must be 'weak' or 'full'")
    if cfg.solver.n_max < 1:
        raise ConfigError("config.solver.n_max: must be >= 1")
    cfg.sweep = _parse_simple(SweepConfig, data.get("sweep", {}), "config.sweep")
    cfg.fit = _parse_simple(FitConfig, data.get("fit", {}), "config.fit")
    for i, item in enumerate(cfg.fit.data):
        _check_keys(item, ("csv", "detuning_ca_pm", "input_power_nw"), f"config.fit.data[{i}]")
        if "csv" not in item or "detuning_ca_pm" not in item:
            raise ConfigError(f"config.fit.data[{i}]: needs csv and detuning_ca_pm")
    return cfg


def load_run_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_run_config(data)


# ---------------------------------------------------------------- manifest


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def manifest(command: str, resolved: dict) -> dict:
    from . import __version__

    body = {"command": command, "version": __version__, "config": resolved}
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    return {**body, "sha256": digest}


def write_manifest(path, man: dict) -> None:
    Path(path).write_text(canonical_json(man), encoding="utf-8")
