"""Parameter estimation: bare-cavity doublet, coupled cavity-emitter spectra, power laws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .analysis import find_extrema_xy
from .model import DriveSpec, SystemParams
from .solver import Spectrum, spectrum, weak_drive_spectrum
from .units import GHZ, PM, angular_detuning

WEAK_FIT_LIMIT = 0.01  # largest calibrated photon number fitted with the weak-drive route


@dataclass
class FitResult:
    """Estimates in reporting units (GHz for rates, pi for phases, pm for offsets)."""

    values: dict
    uncertainty: dict
    ssr: float
    iterations: int
    converged: bool
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "values": dict(self.values),
            "uncertainty": dict(self.uncertainty),
            "ssr": self.ssr,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "extra": _jsonable(self.extra),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def bracket(objective, x_opt, ssr_min: float, tol: float, scale, lower=None, upper=None, max_doublings: int = 40):
    """Half-widths of the level set ``objective <= ssr_min + tol`` along each axis.

    Each coordinate is walked away from the optimum (doubling steps, then
    bisection) until the objective exceeds the level; the reported value is
    the mean of the two one-sided distances.  A side limited by a bound
    contributes the distance to that bound.
    """
    x_opt = np.asarray(x_opt, dtype=float)
    n = x_opt.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    level = ssr_min + tol
    out = np.zeros(n)
    for i in range(n):
        dists = []
        for sign in (+1.0, -1.0):
            limit = upper[i] - x_opt[i] if sign > 0 else x_opt[i] - lower[i]
            step = 1e-6 * max(abs(scale[i]), 1e-12)
            inside = 0.0
            outside = None
            for _ in range(max_doublings):
                trial = min(step, limit)
                x = x_opt.copy()
                x[i] += sign * trial
                if objective(x) > level:
                    outside = trial
                    break
                inside = trial
                if trial >= limit:
                    break
                step *= 2.0
            if outside is None:
                dists.append(inside)
                continue
            for _ in range(30):
                mid = 0.5 * (inside + outside)
                x = x_opt.copy()
                x[i] += sign * mid
                if objective(x) > level:
                    outside = mid
                else:
                    inside = mid
            dists.append(0.5 * (inside + outside))
        out[i] = 0.5 * (dists[0] + dists[1])
    return out


# ---------------------------------------------------------------- bare cavity


def doublet_transmission(offset_pm, center_pm, kappa_t, kappa_e, gamma_beta, wavelength):
    """Transmission of two backscatter-coupled traveling-wave modes without an emitter.

    Rates in rad/s, offsets in pm relative to an arbitrary reference.
    """
    delta = angular_detuning((np.asarray(offset_pm, dtype=float) - center_pm) * PM, wavelength)
    # a_cw = 2 sqrt(ke) (i D + kT) / ((i D + kT)^2 + gb^2) for unit input, with D = w_c - w_l
    z = -1j * delta + kappa_t
    a_cw = 2.0 * math.sqrt(kappa_e) * z / (z * z + gamma_beta**2)
    return np.abs(1.0 - 2.0 * math.sqrt(kappa_e) * a_cw) ** 2


def kappa_e_from_contrast(kappa_t: float, contrast: float, regime: str = "undercoupled") -> float:
    """Invert 8 ki ke / kT^2 = contrast with ki = kT - 2 ke."""
    root = math.sqrt(max(1.0 - contrast, 0.0))
    sign = 1.0 if regime == "undercoupled" else -1.0
    return kappa_t * (1.0 - sign * root) / 4.0


BARE_NAMES = ("center_pm", "kappa_t_ghz", "contrast", "gamma_beta_ghz")


def fit_bare_cavity(
    spec: Spectrum,
    regime: str = "undercoupled",
    noise_sigma: float | None = None,
    ssr_tolerance: float = math.inf,
) -> FitResult:
    """Least-squares fit of the empty-cavity doublet transmission.

    The contrast is fitted and converted to kappa_e through
    8 ki ke / kT^2 = contrast, so the result stays tied to the taper
    calibration.  Returns kappa_T, kappa_e, kappa_i and |gamma_beta| in GHz.
    """
    x = spec.detuning_pm
    y = spec.transmission
    wl = spec.wavelength
    if x.size < 5:
        raise ValueError("need at least 5 points")

    dips = find_extrema_xy(x, y, kind="dip", rel_prominence=0.05)
    if len(dips) == 0:
        raise ValueError("no resonance dip found")
    top = dips.dominant(2)
    locs = dips.location_pm[top]
    center0 = float(np.mean(locs))
    half_split = 0.5 * float(np.ptp(locs)) if len(top) == 2 else 0.0
    fwhm = float(np.median(dips.fwhm_pm[top]))
    kt0 = abs(angular_detuning(0.5 * fwhm * PM, wl)) / GHZ
    gb0 = abs(angular_detuning(half_split * PM, wl)) / GHZ
    c0 = float(np.clip(1.0 - y.min(), 0.02, 0.98))
    if len(top) == 2:
        c0 = float(np.clip(4.0 * c0, 0.02, 0.98))  # each split dip carries a fraction of the contrast

    def model(p):
        center, kt, contrast, gb = p
        ke = kappa_e_from_contrast(kt * GHZ, contrast, regime)
        return doublet_transmission(x, center, kt * GHZ, ke, gb * GHZ, wl)

    def resid(p):
        return model(p) - y

    lower = [x.min(), 1e-4, 1e-6, 0.0]
    upper = [x.max(), np.inf, 1.0, np.inf]
    best = None
    for gb_start in {gb0, 0.0} if gb0 > 0 else {0.0, kt0}:
        p0 = np.array([center0, max(kt0, 1e-3), c0, gb_start])
        p0 = np.clip(p0, lower, np.where(np.isfinite(upper), upper, p0))
        sol = optimize.least_squares(resid, p0, bounds=(lower, upper), x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
        if best is None or sol.cost < best.cost:
            best = sol
    p = best.x
    ssr = float(2.0 * best.cost)
    dof = max(x.size - 4, 1)
    tol = noise_sigma**2 if noise_sigma is not None else max(ssr / dof, 1e-30)
    scale = np.abs(p) + np.array([1.0, 0.1, 0.01, 0.1])
    unc = bracket(lambda q: float(np.sum(resid(q) ** 2)), p, ssr, tol, scale, lower, upper)

    kt = p[1] * GHZ
    ke = kappa_e_from_contrast(kt, p[2], regime)
    values = {
        "center_pm": float(p[0]),
        "kappa_t_ghz": float(p[1]),
        "contrast": float(p[2]),
        "gamma_beta_ghz": float(p[3]),
        "kappa_e_ghz": float(ke / GHZ),
        "kappa_i_ghz": float((kt - 2.0 * ke) / GHZ),
    }
    uncertainty = {name: float(u) for name, u in zip(BARE_NAMES, unc)}
    converged = bool(best.success) and ssr <= ssr_tolerance
    return FitResult(values, uncertainty, ssr, int(best.nfev), converged, best.message)


# ---------------------------------------------------------------- coupled system

FREE_PARAMETERS = {
    # name: (unit scale from reporting units to SystemParams field, default bounds in reporting units)
    "g_tw": (GHZ, (0.0, 20.0)),
    "xi": (math.pi, (0.0, 1.0)),
    "gamma_p": (GHZ, (0.0, 10.0)),
    "gamma_par": (GHZ, (0.0, 10.0)),
    "detuning_ca": (PM, (-200.0, 200.0)),
}


@dataclass
class SpectrumData:
    """One measured column: a spectrum at a known cavity-exciton offset (pm)."""

    spectrum: Spectrum
    detuning_ca_pm: float
    drive: DriveSpec | None = None


def _report_value(params: SystemParams, name: str) -> float:
    scale = FREE_PARAMETERS[name][0]
    return getattr(params, name) / scale


def _apply(params: SystemParams, names, x) -> SystemParams:
    return params.with_(**{n: float(v) * FREE_PARAMETERS[n][0] for n, v in zip(names, x)})


def model_columns(params: SystemParams, data: list[SpectrumData], ca_shift_pm: float = 0.0, n_max: int = 8, force_full: bool = False):
    """Model (T, R) for every data column; weak-drive route unless the drive is strong."""
    out = []
    for col in data:
        p = params.with_(detuning_ca=(col.detuning_ca_pm + ca_shift_pm) * PM)
        grid = col.spectrum.detuning_pm
        strong = col.drive is not None and col.drive.calibrated_photon_number(p) > WEAK_FIT_LIMIT
        if (strong or force_full) and col.drive is not None:
            s = spectrum(p, col.drive, grid, n_max=n_max)
        else:
            s = weak_drive_spectrum(p, grid)
        out.append((s.transmission, s.reflection))
    return out


def fit_qme(
    data: list[SpectrumData],
    initial: SystemParams,
    free=("g_tw", "xi", "gamma_p"),
    bounds: dict | None = None,
    weights: tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
    restarts: int = 3,
    noise_sigma: float | None = None,
    ssr_tolerance: float = math.inf,
    verify_full: bool = False,
    n_max: int = 8,
    maxiter: int = 4000,
) -> FitResult:
    """Simplex fit of absolute T and R of one or more columns.

    Cavity rates and |gamma_beta| stay at ``initial``; ``free`` is a subset of
    g_tw, xi, gamma_p, gamma_par and detuning_ca (the last is a common shift
    added to every column's offset).  The first simplex starts at
    ``initial``; ``restarts`` more start from seeded random points inside
    the bounds.
    """
    free = tuple(free)
    unknown = set(free) - set(FREE_PARAMETERS)
    if unknown:
        raise ValueError(f"unsupported free parameter(s): {sorted(unknown)}")
    if not free:
        raise ValueError("free set is empty")
    if not data:
        raise ValueError("no data columns")
    bounds = {**{n: FREE_PARAMETERS[n][1] for n in free}, **(bounds or {})}
    lo = np.array([bounds[n][0] for n in free], dtype=float)
    hi = np.array([bounds[n][1] for n in free], dtype=float)
    wt, wr = weights
    ts = [c.spectrum.transmission for c in data]
    rs = [c.spectrum.reflection for c in data]
    n_points = sum(t.size for t in ts)

    base = initial
    shift_index = free.index("detuning_ca") if "detuning_ca" in free else None
    physical = [n for n in free if n != "detuning_ca"]
    phys_index = [free.index(n) for n in physical]

    def evaluate(x, force_full=False):
        p = _apply(base, physical, x[phys_index])
        shift = float(x[shift_index]) if shift_index is not None else 0.0
        return model_columns(p, data, shift, n_max, force_full)

    def objective(x):
        if np.any(x < lo) or np.any(x > hi):
            return math.inf
        total = 0.0
        for (tm, rm), t, r in zip(evaluate(x), ts, rs):
            total += wt * float(np.sum((tm - t) ** 2)) + wr * float(np.sum((rm - r) ** 2))
        return total

    x0 = np.array([_report_value(initial, n) if n != "detuning_ca" else 0.0 for n in free])
    x0 = np.clip(x0, lo, hi)
    rng = np.random.default_rng(seed)
    starts = [x0]
    for _ in range(restarts):
        starts.append(lo + rng.uniform(0.1, 0.9, size=lo.size) * (hi - lo))

    iterations = 0
    best = None
    for start in starts:
        width = np.maximum(0.1 * np.abs(start), 0.05 * (hi - lo))
        simplex = [start]
        for i in range(start.size):
            v = start.copy()
            v[i] = v[i] + width[i] if v[i] + width[i] <= hi[i] else v[i] - width[i]
            simplex.append(v)
        sol = optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"initial_simplex": np.array(simplex), "xatol": 1e-10, "fatol": max(1e-16, 1e-13 * objective(start)), "maxiter": maxiter, "maxfev": 2 * maxiter},
        )
        iterations += int(sol.nit)
        if best is None or sol.fun < best.fun:
            best = sol
    # polish from the winner; fatol is relative so noisy data can still terminate
    sol = optimize.minimize(objective, best.x, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                            options={"xatol": 1e-12, "fatol": max(1e-18, 1e-14 * best.fun), "maxiter": maxiter, "maxfev": 2 * maxiter})
    iterations += int(sol.nit)
    if sol.fun <= best.fun:
        best = sol

    x = best.x
    ssr = float(best.fun)
    dof = max(n_points * (1 + (wr > 0)) - x.size, 1)
    tol = noise_sigma**2 if noise_sigma is not None else max(ssr / dof, 1e-30)
    scale = np.maximum(np.abs(x), 0.01 * (hi - lo))
    unc = bracket(objective, x, ssr, tol, scale, lo, hi)
    span = hi - lo
    at_bound = [n for n, v, a, b, s in zip(free, x, lo, hi, span) if min(v - a, b - v) <= 1e-6 * s]

    fitted = _apply(base, physical, x[phys_index])
    values = {n: float(v) for n, v in zip(free, x)}
    extra = {"params": fitted.to_json_dict(), "at_bound": at_bound, "starts": len(starts)}
    if verify_full:
        drive = next((c.drive for c in data if c.drive is not None), None)
        if drive is None:
            drive = DriveSpec.from_photon_number(fitted, 1e-3)
        diffs = []
        for col in data:
            p = fitted.with_(detuning_ca=(col.detuning_ca_pm + (values.get("detuning_ca", 0.0))) * PM)
            grid = col.spectrum.detuning_pm
            full = spectrum(p, drive, grid, n_max=n_max)
            weak = weak_drive_spectrum(p, grid)
            diffs.append(max(np.abs(full.transmission - weak.transmission).max(), np.abs(full.reflection - weak.reflection).max()))
        extra["full_vs_weak_max_abs"] = float(max(diffs))
    message = str(best.message)
    if at_bound:
        message += f"; parameter(s) at bound: {', '.join(at_bound)}"
    converged = bool(best.success) and not at_bound and ssr <= ssr_tolerance
    return FitResult(values, {n: float(u) for n, u in zip(free, unc)}, ssr, iterations, converged, message, extra)


# ---------------------------------------------------------------- power law


def fit_power_law(power, intensity) -> FitResult:
    """Least squares of log I against log P; returns exponent ``x`` and prefactor ``c`` with I = c P^x."""
    p = np.asarray(power, dtype=float)
    i = np.asarray(intensity, dtype=float)
    if p.shape != i.shape or p.size < 3:
        raise ValueError("need at least 3 (P, I) pairs")
    if np.any(p <= 0) or np.any(i <= 0) or not np.all(np.isfinite(p * i)):
        raise ValueError("power-law fit needs positive finite data")
    lp, li = np.log(p), np.log(i)
    reg = stats.linregress(lp, li)
    ssr = float(np.sum((li - (reg.intercept + reg.slope * lp)) ** 2))
    return FitResult(
        values={"x": float(reg.slope), "c": float(np.exp(reg.intercept))},
        uncertainty={"x": float(reg.stderr), "c": float(np.exp(reg.intercept) * reg.intercept_stderr)},
        ssr=ssr,
        iterations=1,
        converged=True,
    )
