"""Unit conversions and fiber-taper calibration of the intracavity photon number.

All rates are angular-frequency half-linewidth (amplitude decay) rates in
rad/s, so a loaded quality factor ``Q`` maps to ``kappa = omega0 / (2 Q)``.
Lengths are in metres.  Conversions to GHz / pm happen only when reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Literal

from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import hbar as HBAR

Regime = Literal["undercoupled", "overcoupled"]

TWO_PI = 2.0 * math.pi
GHZ = TWO_PI * 1e9  # rad/s per GHz of ordinary frequency
PM = 1e-12
NM = 1e-9


def to_ghz(rate: float) -> float:
    """Angular rate (rad/s) -> ordinary frequency in GHz."""
    return rate / GHZ


def from_ghz(value: float) -> float:
    return value * GHZ


def angular_frequency(wavelength: float) -> float:
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength!r}")
    return TWO_PI * SPEED_OF_LIGHT / wavelength


def photon_energy(wavelength: float) -> float:
    return HBAR * angular_frequency(wavelength)


def kappa_from_q(q_loaded: float, wavelength: float) -> float:
    """Half-linewidth decay rate (rad/s) of a mode with loaded quality factor ``q_loaded``.

    ``q_loaded = inf`` is the lossless limit and returns 0.
    """
    if not q_loaded > 0:
        raise ValueError(f"quality factor must be positive, got {q_loaded!r}")
    return angular_frequency(wavelength) / (2.0 * q_loaded)


def q_from_kappa(kappa: float, wavelength: float) -> float:
    if not kappa > 0:
        raise ValueError(f"decay rate must be positive, got {kappa!r}")
    return angular_frequency(wavelength) / (2.0 * kappa)


def wavelength_to_frequency_detuning(delta_lambda: float, wavelength: float) -> float:
    """Small wavelength offset -> ordinary-frequency offset in Hz (magnitude mapping, c*dl/l0^2).

    The sign is preserved; a red (longer) wavelength offset corresponds to a
    *lower* optical frequency, which callers that need a signed angular
    detuning must account for themselves.
    """
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength!r}")
    return SPEED_OF_LIGHT * delta_lambda / wavelength**2


def frequency_to_wavelength_detuning(delta_nu: float, wavelength: float) -> float:
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength!r}")
    return delta_nu * wavelength**2 / SPEED_OF_LIGHT


def angular_detuning(delta_lambda, wavelength: float):
    """Signed angular-frequency shift (rad/s) produced by a wavelength shift (m).

    Works elementwise on numpy arrays.
    """
    return -TWO_PI * SPEED_OF_LIGHT * delta_lambda / wavelength**2


def wavelength_detuning(delta_omega, wavelength: float):
    """Inverse of :func:`angular_detuning`."""
    return -delta_omega * wavelength**2 / (TWO_PI * SPEED_OF_LIGHT)


def _check_contrast(contrast: float) -> None:
    if not 0.0 <= contrast <= 1.0:
        raise ValueError(f"transmission contrast must lie in [0, 1], got {contrast!r}")


def _regime_sign(regime: str) -> float:
    if regime == "undercoupled":
        return 1.0
    if regime == "overcoupled":
        return -1.0
    raise ValueError(f"regime must be 'undercoupled' or 'overcoupled', got {regime!r}")


def q_intrinsic_from_contrast(q_loaded: float, contrast: float, regime: Regime = "undercoupled") -> float:
    """Intrinsic-plus-parasitic Q from the loaded Q and the on-resonance dip depth.

    Returns ``math.inf`` for an overcoupled cavity with zero contrast, where
    the relation is singular.
    """
    if not q_loaded > 0:
        raise ValueError(f"quality factor must be positive, got {q_loaded!r}")
    _check_contrast(contrast)
    denom = 1.0 + _regime_sign(regime) * math.sqrt(1.0 - contrast)
    if denom == 0.0:
        return math.inf
    return 2.0 * q_loaded / denom


def contrast_from_q(q_loaded: float, q_intrinsic: float) -> float:
    """Dip depth implied by a loaded / intrinsic Q pair (inverse of :func:`q_intrinsic_from_contrast`)."""
    return 1.0 - (2.0 * q_loaded / q_intrinsic - 1.0) ** 2


def contrast_from_rates(kappa_e: float, kappa_i: float) -> float:
    """On-resonance dip depth of a single traveling-wave mode: 8 ki ke / kT^2."""
    kappa_t = kappa_i + 2.0 * kappa_e
    return 8.0 * kappa_i * kappa_e / kappa_t**2


def coupling_parameter(kappa_e: float, kappa_ip: float) -> float:
    """Waveguide coupling relative to intrinsic+parasitic loss, K = ke / k_{i+P}."""
    if not kappa_ip > 0:
        raise ValueError(f"intrinsic loss rate must be positive, got {kappa_ip!r}")
    return kappa_e / kappa_ip


def lorentzian_factor(detuning: float, kappa_t: float) -> float:
    """Relative stored energy of a mode driven ``detuning`` rad/s off resonance."""
    return 1.0 / (1.0 + (detuning / kappa_t) ** 2)


@dataclass(frozen=True)
class CalibInput:
    input_power: float  # W, launched into the taper
    taper_transmission: float  # zeta, end-to-end taper transmission
    contrast: float  # Delta T = 1 - T on resonance
    loaded_q: float
    wavelength: float  # m
    regime: Regime = "undercoupled"
    detuning: float = 0.0  # rad/s, laser - cavity

    def __post_init__(self):
        if not 0.0 <= self.taper_transmission <= 1.0:
            raise ValueError("taper_transmission must lie in [0, 1]")
        _check_contrast(self.contrast)
        if not self.loaded_q > 0:
            raise ValueError("loaded_q must be positive")
        if self.input_power < 0:
            raise ValueError("input_power must be non-negative")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        _regime_sign(self.regime)

    @property
    def omega0(self) -> float:
        return angular_frequency(self.wavelength)

    @property
    def dropped_power(self) -> float:
        """Power coupled into the cavity, sqrt(zeta) * Delta T * P_in."""
        return math.sqrt(self.taper_transmission) * self.contrast * self.input_power


@dataclass(frozen=True)
class CalibResult:
    cavity_energy: float  # J
    photon_number: float
    intrinsic_q: float
    coupling_parameter: float
    relative_uncertainty: float = 0.0
    singular: bool = False

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def intracavity_photon_number(inp: CalibInput, budget: "UncertaintyBudget | None" = None) -> CalibResult:
    """Stored energy and mean photon number from measured taper quantities.

    On resonance this is ``2 sqrt(zeta) dT P_in Q_T / ((1 +- sqrt(1 - dT)) omega0)``;
    off resonance it is scaled by ``1 / (1 + (detuning / kappa_T)^2)``.
    """
    omega0 = inp.omega0
    q_ip = q_intrinsic_from_contrast(inp.loaded_q, inp.contrast, inp.regime)
    if math.isinf(q_ip):
        return CalibResult(math.inf, math.inf, math.inf, math.inf, math.nan, singular=True)

    n_cav = _photon_number(inp)
    # K = ke / k_{i+P} with ke per direction: 2 ke = kT - k_{i+P}
    kappa_t = omega0 / (2.0 * inp.loaded_q)
    kappa_ip = omega0 / (2.0 * q_ip)
    kappa_e = 0.5 * (kappa_t - kappa_ip)
    sigma = propagate_ncav_uncertainty(inp, budget) if budget is not None else 0.0
    return CalibResult(
        cavity_energy=n_cav * HBAR * omega0,
        photon_number=n_cav,
        intrinsic_q=q_ip,
        coupling_parameter=coupling_parameter(kappa_e, kappa_ip),
        relative_uncertainty=sigma,
    )


@dataclass(frozen=True)
class UncertaintyBudget:
    """Relative (fractional) 1-sigma uncertainties of the calibration inputs."""

    laser_power: float = 0.03
    taper_symmetry: float = 0.05
    fiber_unions: float = 0.075
    contrast_noise: float = 0.01
    polarization: float = 0.025
    linewidth: float = 0.02

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{f.name} must lie in [0, 1), got {v!r}")

    @classmethod
    def zero(cls) -> "UncertaintyBudget":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# which calibration input each budget entry perturbs
_BUDGET_TARGET = {
    "laser_power": "input_power",
    "taper_symmetry": "input_power",
    "fiber_unions": "input_power",
    "contrast_noise": "contrast",
    "polarization": "contrast",
    "linewidth": "loaded_q",
}


def _log_sensitivity(inp: CalibInput, name: str, step: float = 1e-6) -> float:
    """d ln n / d ln x by central finite difference on input ``name``."""
    x = getattr(inp, name)
    if x == 0.0:
        return 0.0
    vals = {}
    for sign in (+1, -1):
        xs = x * (1.0 + sign * step)
        if name == "contrast":
            xs = min(xs, 1.0)
        vals[sign] = (xs, _photon_number(_replace(inp, **{name: xs})))
    (xp, np_), (xm, nm) = vals[+1], vals[-1]
    if np_ <= 0 or nm <= 0:
        return 0.0
    return (math.log(np_) - math.log(nm)) / (math.log(xp) - math.log(xm))


def _replace(inp: CalibInput, **changes) -> CalibInput:
    kw = {f.name: getattr(inp, f.name) for f in fields(inp)}
    kw.update(changes)
    return CalibInput(**kw)


def _photon_number(inp: CalibInput) -> float:
    q_ip = q_intrinsic_from_contrast(inp.loaded_q, inp.contrast, inp.regime)
    if math.isinf(q_ip):
        return math.inf
    omega0 = inp.omega0
    kappa_t = omega0 / (2.0 * inp.loaded_q)
    energy = math.sqrt(inp.taper_transmission) * inp.contrast * q_ip * inp.input_power / omega0
    return energy * lorentzian_factor(inp.detuning, kappa_t) / (HBAR * omega0)


def propagate_ncav_uncertainty(inp: CalibInput, budget: UncertaintyBudget) -> float:
    """Relative 1-sigma uncertainty of the photon number.

    Each budget entry is an independent relative error on one input; the
    first-order contributions are summed in quadrature.
    """
    total = 0.0
    cache: dict[str, float] = {}
    for f in fields(budget):
        u = getattr(budget, f.name)
        if u == 0.0:
            continue
        target = _BUDGET_TARGET[f.name]
        if target not in cache:
            cache[target] = _log_sensitivity(inp, target)
        total += (cache[target] * u) ** 2
    return math.sqrt(total)
