"""Sweeps that mirror the measurement protocols: anti-crossing maps and power series."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import contrast_at, find_extrema, splitting
from .model import DriveSpec, SystemParams
from .solver import SolverError, Spectrum, default_grid, spectrum, weak_drive_spectrum
from .units import PM, CalibInput, intracavity_photon_number, q_from_kappa, wavelength_detuning

log = logging.getLogger(__name__)

WEAK_DRIVE_WARNING = 0.05
MAX_BRANCHES = 3


@dataclass(frozen=True)
class TuningSchedule:
    """Cavity-exciton offsets (pm) visited by successive tuning steps."""

    values_pm: tuple[float, ...]
    mode: str = "linear"

    def __post_init__(self):
        v = np.asarray(self.values_pm, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("schedule needs at least one step")
        object.__setattr__(self, "values_pm", tuple(float(x) for x in v))
        if v.size < 3:
            return
        inc = np.diff(v)
        if self.mode == "linear":
            if not np.allclose(inc, inc[0], rtol=1e-9, atol=1e-12):
                raise ValueError("linear schedule must have constant increments")
        elif self.mode == "quadratic":
            d = np.diff(inc)
            if not (np.all(d >= 0) or np.all(d <= 0)):
                raise ValueError("quadratic schedule increments must be monotone")
        else:
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def linear(cls, step_pm: float = 12.0, steps: int = 20, center_pm: float = 0.0) -> "TuningSchedule":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        k = np.arange(steps) - 0.5 * (steps - 1)
        return cls(tuple(center_pm + step_pm * k), "linear")

    @classmethod
    def quadratic(cls, coefficients, steps: int) -> "TuningSchedule":
        """Offsets c0 + c1 k + c2 k^2 for k = 0..steps-1 (coefficients in pm)."""
        c0, c1, c2 = (float(c) for c in coefficients)
        k = np.arange(steps, dtype=float)
        return cls(tuple(c0 + c1 * k + c2 * k * k), "quadratic")

    @property
    def steps(self) -> int:
        return len(self.values_pm)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values_pm)

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "values_pm": list(self.values_pm)}


@dataclass
class AnticrossingMap:
    detuning_ca_pm: np.ndarray
    detuning_la_pm: np.ndarray
    transmission: np.ndarray  # (steps, grid)
    reflection: np.ndarray
    branches_pm: list = field(default_factory=list)  # per column: up to 3 most prominent extrema, sorted
    doublet_pm: list = field(default_factory=list)  # per column: the two most prominent of those
    failed: list = field(default_factory=list)  # (column, message) for columns that could not be solved

    def branch_count(self) -> np.ndarray:
        return np.array([len(b) for b in self.branches_pm])

    def doublet_separation(self) -> np.ndarray:
        """Per-column separation (pm) of the two dominant extrema, NaN where fewer than two."""
        return np.array([float(d[1] - d[0]) if len(d) == 2 else math.nan for d in self.doublet_pm])

    def minimum_separation(self) -> tuple[float, float]:
        """Smallest Rabi-doublet separation and the cavity offset where it occurs.

        Only columns whose dominant pair straddles the bare exciton line
        (offset 0) count; far from resonance that pair is the empty-cavity
        doublet, which says nothing about the emitter coupling.
        """
        sep = np.array([
            float(d[1] - d[0]) if len(d) == 2 and d[0] <= 0.0 <= d[1] else math.nan for d in self.doublet_pm
        ])
        if np.all(np.isnan(sep)):
            return math.inf, math.nan
        k = int(np.nanargmin(sep))
        return float(sep[k]), float(self.detuning_ca_pm[k])


def _branches(spec: Spectrum, channel: str = "T") -> tuple[np.ndarray, np.ndarray]:
    peaks = find_extrema(spec, channel)
    if len(peaks) == 0:
        return np.array([]), np.array([])
    loc = peaks.location_pm
    return np.sort(loc[peaks.dominant(MAX_BRANCHES)]), np.sort(loc[peaks.dominant(2)])


def anticrossing_grid(params: SystemParams, schedule: TuningSchedule, points: int = 601) -> np.ndarray:
    """Laser offsets (pm) covering every column's features with a 6 kappa_T margin."""
    margin = abs(wavelength_detuning(6.0 * params.kappa_t + params.gamma_beta + params.g_tw, params.wavelength)) / PM
    lo = min(min(schedule.values_pm), 0.0) - margin
    hi = max(max(schedule.values_pm), 0.0) + margin
    return np.linspace(lo, hi, points)


def anticrossing_scan(
    params: SystemParams,
    schedule: TuningSchedule | None = None,
    grid_pm=None,
    drive: DriveSpec | None = None,
    full: bool = False,
    n_max: int = 8,
    threads: int = 1,
    channel: str = "T",
) -> AnticrossingMap:
    """One spectrum per schedule step on a common laser grid.

    The weak-drive route is used unless ``full`` is set (which needs ``drive``).
    """
    schedule = schedule or TuningSchedule.linear()
    grid = anticrossing_grid(params, schedule) if grid_pm is None else np.asarray(grid_pm, dtype=float)
    if drive is not None:
        n_cal = drive.calibrated_photon_number(params)
        if n_cal > WEAK_DRIVE_WARNING:
            warnings.warn(
                f"drive gives n_cav = {n_cal:.3g} > {WEAK_DRIVE_WARNING}; anti-crossing maps assume weak driving",
                stacklevel=2,
            )
    if full and drive is None:
        raise ValueError("a full master-equation scan needs a drive")

    def column(k):
        p = params.with_(detuning_ca=schedule.values_pm[k] * PM)
        if full:
            return spectrum(p, drive, grid, n_max=n_max)
        return weak_drive_spectrum(p, grid, drive)

    cols: list = [None] * schedule.steps
    failed = []

    def run(k):
        try:
            cols[k] = column(k)
        except SolverError as exc:
            failed.append((k, str(exc)))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, range(schedule.steps)))
    else:
        for k in range(schedule.steps):
            run(k)
    nan_row = np.full(grid.size, np.nan)
    t = np.vstack([c.transmission if c is not None else nan_row for c in cols])
    r = np.vstack([c.reflection if c is not None else nan_row for c in cols])
    found = [_branches(c, channel) if c is not None else (np.array([]), np.array([])) for c in cols]
    out = AnticrossingMap(
        np.array(schedule.values_pm), grid, t, r, [f[0] for f in found], [f[1] for f in found], sorted(failed)
    )
    if failed:
        k, msg = out.failed[0]
        exc = SolverError(f"anti-crossing column {k} failed: {msg}", point=k)
        exc.partial = out
        raise exc
    return out


@dataclass
class SaturationCurve:
    dropped_power: np.ndarray  # W
    n_cav: np.ndarray  # on-resonance empty-cavity calibration
    splitting_pm: np.ndarray  # of the reflection doublet (NaN when unresolved)
    peak_reflection: np.ndarray
    contrast: np.ndarray  # 1 - T at contrast_offset_pm
    contrast_offset_pm: float
    truncated: np.ndarray
    spectra: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if np.any(np.diff(self.n_cav) <= 0):
            raise ValueError("n_cav must increase strictly along the sweep")

    def response(self, name: str) -> np.ndarray:
        return {"contrast": self.contrast, "splitting": self.splitting_pm, "peak_reflection": self.peak_reflection}[name]


def bare_long_dip_offset(params: SystemParams) -> float:
    """Nominal laser offset (pm) of the longer-wavelength bare doublet member, lambda_c + |dlambda_beta|."""
    return params.detuning_ca / PM + abs(wavelength_detuning(params.gamma_beta, params.wavelength)) / PM


@dataclass(frozen=True)
class EmptyCavityCalibration:
    """Taper calibration of the emitter-free cavity at its longer-wavelength dip.

    This is what a measurement would use: the dip contrast and loaded Q of the
    bare (backscatter-split) resonance fed into the stored-energy formula of
    :func:`intracavity_photon_number`.
    """

    dip_offset_pm: float
    contrast: float
    loaded_q: float
    wavelength: float

    def calib_input(self, drive: DriveSpec) -> CalibInput:
        return CalibInput(drive.input_power, drive.taper_transmission, self.contrast, self.loaded_q, self.wavelength)

    def photon_number(self, drive: DriveSpec) -> float:
        return intracavity_photon_number(self.calib_input(drive)).photon_number

    def dropped_power(self, drive: DriveSpec) -> float:
        return self.calib_input(drive).dropped_power

    def drive_for(self, n_cav: float, taper_transmission: float = 1.0) -> DriveSpec:
        unit = DriveSpec(1.0, self.wavelength, taper_transmission)
        return DriveSpec(n_cav / self.photon_number(unit), self.wavelength, taper_transmission)


def empty_cavity_calibration(params: SystemParams, points: int = 4001) -> EmptyCavityCalibration:
    empty = params.with_(g_tw=0.0)
    center = params.detuning_ca / PM
    half = abs(wavelength_detuning(params.gamma_beta + 4.0 * params.kappa_t, params.wavelength)) / PM
    s = weak_drive_spectrum(empty, np.linspace(center - half, center + half, points))
    peaks = find_extrema(s, "T", rel_prominence=0.02)
    if len(peaks) == 0:
        raise ValueError("empty cavity shows no transmission dip")
    keep = peaks.dominant(2)
    i = keep[np.argmax(peaks.location_pm[keep])]
    return EmptyCavityCalibration(
        dip_offset_pm=float(peaks.location_pm[i]),
        contrast=float(1.0 - peaks.value[i]),
        loaded_q=q_from_kappa(params.kappa_t, params.wavelength),
        wavelength=params.wavelength,
    )


def drives_for_photon_numbers(params: SystemParams, n_values, taper_transmission: float = 1.0) -> list[DriveSpec]:
    """Drives whose empty-cavity calibrated photon numbers equal ``n_values``."""
    cal = empty_cavity_calibration(params)
    return [cal.drive_for(float(n), taper_transmission) for n in n_values]


def power_sweep(
    params: SystemParams,
    drives,
    detuning_ca_pm: float | None = None,
    grid_pm=None,
    n_max: int = 8,
    threads: int = 1,
    contrast_offset_pm: float | None = None,
    keep_spectra: bool = False,
) -> SaturationCurve:
    """Full master-equation spectra at increasing drive and their saturation metrics."""
    drives = list(drives)
    if not drives:
        raise ValueError("drive list is empty")
    powers = np.array([d.input_power for d in drives])
    if np.any(np.diff(powers) <= 0):
        raise ValueError("drive list must be strictly increasing")
    if detuning_ca_pm is not None:
        params = params.with_(detuning_ca=detuning_ca_pm * PM)
    grid = default_grid(params, 161) if grid_pm is None else np.asarray(grid_pm, dtype=float)
    cal = empty_cavity_calibration(params)
    if contrast_offset_pm is None:
        contrast_offset_pm = cal.dip_offset_pm

    spectra = []
    for d in drives:
        spectra.append(spectrum(params, d, grid, n_max=n_max, threads=threads))
        log.info("power sweep: P_in = %.3g W done", d.input_power)

    split = []
    for s in spectra:
        sp = splitting(find_extrema(s, "R"))
        split.append(sp.delta_pm if sp is not None else math.nan)
    return SaturationCurve(
        dropped_power=np.array([cal.dropped_power(d) for d in drives]),
        n_cav=np.array([cal.photon_number(d) for d in drives]),
        splitting_pm=np.array(split),
        peak_reflection=np.array([s.reflection.max() for s in spectra]),
        contrast=np.array([contrast_at(s, contrast_offset_pm) for s in spectra]),
        contrast_offset_pm=float(contrast_offset_pm),
        truncated=np.array([bool(s.truncated.any()) for s in spectra]),
        spectra=spectra if keep_spectra else [],
    )


def rescale(y) -> np.ndarray:
    """Min-max rescaling onto [0, 1]."""
    y = np.asarray(y, dtype=float)
    lo, hi = np.nanmin(y), np.nanmax(y)
    if not hi > lo:
        raise ValueError("degenerate curve: max equals min")
    return (y - lo) / (hi - lo)


def half_saturation(x, y_scaled) -> float:
    """First abscissa where a rescaled response crosses 1/2, interpolated in log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y_scaled, dtype=float)
    if np.any(x <= 0):
        raise ValueError("abscissa must be positive for log interpolation")
    rising = y[-1] >= y[0]
    z = y - 0.5 if rising else 0.5 - y
    for i in range(len(z) - 1):
        if z[i] < 0 <= z[i + 1]:
            f = -z[i] / (z[i + 1] - z[i])
            return float(np.exp(np.log(x[i]) + f * (np.log(x[i + 1]) - np.log(x[i]))))
        if z[i] == 0:
            return float(x[i])
    raise ValueError("response never crosses half saturation")


@dataclass(frozen=True)
class SaturationComparison:
    scaled_a: np.ndarray
    scaled_b: np.ndarray
    half_a: float
    half_b: float

    @property
    def ratio(self) -> float:
        return self.half_b / self.half_a


def _curve_xy(curve, response):
    if isinstance(curve, SaturationCurve):
        return curve.n_cav, curve.response(response)
    x, y = curve
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def compare_saturation_curves(curve_a, curve_b, response: str = "contrast") -> SaturationComparison:
    """Rescale two saturation responses to [0, 1] and compare their half-saturation points.

    Each curve is a :class:`SaturationCurve` or an ``(n_cav, response)`` pair.
    """
    xa, ya = _curve_xy(curve_a, response)
    xb, yb = _curve_xy(curve_b, response)
    sa, sb = rescale(ya), rescale(yb)
    return SaturationComparison(sa, sb, half_saturation(xa, sa), half_saturation(xb, sb))
