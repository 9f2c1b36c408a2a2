"""Spectrum post-processing: extrema, widths, splittings, contrast and scan statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .solver import Spectrum
from .units import PM, angular_detuning, wavelength_detuning

DIP_CHANNELS = {"T", "transmission"}
DEFAULT_REL_PROMINENCE = 0.01


@dataclass
class PeakSet:
    """Extrema of one channel, sorted by wavelength offset."""

    location_pm: np.ndarray
    value: np.ndarray
    prominence: np.ndarray
    fwhm_pm: np.ndarray
    kind: str  # "dip" or "peak"
    channel: str
    wavelength: float

    def __len__(self) -> int:
        return self.location_pm.size

    @property
    def location_omega(self) -> np.ndarray:
        return angular_detuning(self.location_pm * PM, self.wavelength)

    def dominant(self, count: int = 2) -> np.ndarray:
        """Indices of the ``count`` most prominent extrema; ties go to the shorter wavelength."""
        order = np.lexsort((self.location_pm, -self.prominence))
        return np.sort(order[:count])


@dataclass(frozen=True)
class Splitting:
    delta_pm: float
    delta_omega: float
    positions_pm: tuple[float, float]


def _moving_average(y: np.ndarray) -> np.ndarray:
    out = y.copy()
    out[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
    return out


def _parabolic(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    if i == 0 or i == len(y) - 1:
        return float(x[i]), float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0.0:
        return float(x[i]), float(y1)
    off = 0.5 * (y0 - y2) / denom
    off = min(max(off, -1.0), 1.0)
    h = x[i + 1] - x[i] if off >= 0 else x[i] - x[i - 1]
    return float(x[i] + off * h), float(y1 - 0.25 * (y0 - y2) * off)


def find_extrema_xy(
    x,
    y,
    kind: str = "peak",
    smooth: bool = False,
    rel_prominence: float = DEFAULT_REL_PROMINENCE,
    channel: str = "",
    wavelength: float = 1.0,
) -> PeakSet:
    """Local extrema of ``y(x)`` with parabolic sub-grid refinement and FWHM.

    ``rel_prominence`` discards extrema whose prominence is below that
    fraction of the data range.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5 or x.shape != y.shape:
        raise ValueError("need at least 5 points and matching x/y shapes")
    if kind not in ("dip", "peak"):
        raise ValueError("kind must be 'dip' or 'peak'")
    if np.any(np.diff(x) <= 0):
        order = np.argsort(x)
        x, y = x[order], y[order]
    data = _moving_average(y) if smooth else y
    signal = -data if kind == "dip" else data
    span = float(np.ptp(signal))
    if span == 0.0:
        empty = np.array([])
        return PeakSet(empty, empty, empty, empty, kind, channel, wavelength)
    idx, props = find_peaks(signal, prominence=rel_prominence * span)
    fwhm = np.array([])
    if idx.size:
        prom = (props["prominences"], props["left_bases"], props["right_bases"])
        _, _, left, right = peak_widths(signal, idx, rel_height=0.5, prominence_data=prom)
        # fractional sample positions -> pm
        samples = np.arange(x.size)
        fwhm = np.interp(right, samples, x) - np.interp(left, samples, x)
    loc, val = [], []
    for i in idx:
        xi, vi = _parabolic(x, signal, int(i))
        loc.append(xi)
        val.append(-vi if kind == "dip" else vi)
    return PeakSet(
        location_pm=np.array(loc),
        value=np.array(val),
        prominence=np.asarray(props["prominences"], dtype=float),
        fwhm_pm=np.asarray(fwhm, dtype=float),
        kind=kind,
        channel=channel,
        wavelength=wavelength,
    )


def find_extrema(
    spectrum: Spectrum,
    channel: str = "R",
    kind: str | None = None,
    smooth: bool = False,
    rel_prominence: float = DEFAULT_REL_PROMINENCE,
) -> PeakSet:
    """Dips of the transmission, peaks of every other channel unless ``kind`` says otherwise."""
    if kind is None:
        kind = "dip" if channel in DIP_CHANNELS else "peak"
    return find_extrema_xy(
        spectrum.detuning_pm,
        spectrum.channel(channel),
        kind=kind,
        smooth=smooth,
        rel_prominence=rel_prominence,
        channel=channel,
        wavelength=spectrum.wavelength,
    )


def splitting(peaks: PeakSet) -> Splitting | None:
    """Separation of the two dominant extrema, or None with fewer than two."""
    if len(peaks) < 2:
        return None
    i, j = peaks.dominant(2)
    a, b = float(peaks.location_pm[i]), float(peaks.location_pm[j])
    d_pm = abs(b - a)
    return Splitting(d_pm, float(abs(angular_detuning(d_pm * PM, peaks.wavelength))), (a, b))


def contrast_at(spectrum: Spectrum, offset_pm: float) -> float:
    """1 - T linearly interpolated at a laser offset (pm) inside the grid."""
    x = spectrum.detuning_pm
    lo, hi = float(np.min(x)), float(np.max(x))
    if not lo <= offset_pm <= hi:
        raise ValueError(f"offset {offset_pm} pm is outside the grid [{lo}, {hi}]")
    order = np.argsort(x)
    return float(1.0 - np.interp(offset_pm, x[order], spectrum.transmission[order]))


@dataclass
class EnsembleStats:
    mean: np.ndarray
    std: np.ndarray  # sample standard deviation (ddof = 1)
    rms: np.ndarray  # rms deviation from the mean (ddof = 0)
    count: int


def ensemble_stats(scans, channel: str = "T", normalize: bool = False) -> EnsembleStats:
    """Point-wise statistics over repeated scans on one grid.

    ``scans`` holds :class:`Spectrum` objects or plain 1-D arrays.
    """
    rows = []
    grid = None
    for s in scans:
        if isinstance(s, Spectrum):
            if grid is None:
                grid = s.detuning_pm
            elif s.detuning_pm.shape != grid.shape or not np.array_equal(s.detuning_pm, grid):
                raise ValueError("scans are on different grids")
            y = s.normalized(channel) if normalize else s.channel(channel)
        else:
            y = np.asarray(s, dtype=float)
            if normalize:
                peak = np.max(np.abs(y))
                y = y / peak if peak > 0 else y
        rows.append(np.asarray(y, dtype=float))
    if len(rows) < 2:
        raise ValueError("need at least two scans")
    if len({r.shape for r in rows}) != 1:
        raise ValueError("scans are on different grids")
    data = np.vstack(rows)
    # deviations from the first scan: identical scans give exactly zero spread
    dev = data - data[0]
    dev = dev - dev.mean(axis=0)
    return EnsembleStats(
        mean=data.mean(axis=0),
        std=np.sqrt(np.sum(dev**2, axis=0) / (len(rows) - 1)),
        rms=np.sqrt(np.mean(dev**2, axis=0)),
        count=len(rows),
    )


def lorentzian_fwhm_pm(kappa: float, wavelength: float) -> float:
    """Full width (pm) of a Lorentzian with half-width ``kappa`` (rad/s)."""
    return abs(wavelength_detuning(2.0 * kappa, wavelength)) / PM
