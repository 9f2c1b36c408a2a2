"""Two-mode whispering-gallery cavity coupled to a two-level exciton.

Hamiltonian (rotating at the laser frequency, hbar = 1, rates in rad/s)::

    H = Dc (n_cw + n_ccw) + Da s+s
        - |gb| (e^{i xi} a_cw^+ a_ccw + h.c.)
        + g_tw (a_cw^+ s + a_ccw^+ s + h.c.)
        + i E (a_cw^+ - a_cw)

with E = 2 sqrt(ke) s_in the drive amplitude for an input photon flux
|s_in|^2 launched into the cw direction.  The backscattering sign is chosen
so that the standing-wave supermode coupling g_tw |1 + e^{i xi}| / sqrt(2)
belongs to the long-wavelength member of the doublet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.constants import c as SPEED_OF_LIGHT

from .operators import HilbertLayout, ModeOperators, canonical, dagger
from .units import GHZ, NM, PM, angular_detuning, angular_frequency, contrast_from_rates, photon_energy

SQRT2 = math.sqrt(2.0)


def standing_wave_couplings(g_tw: float, xi: float) -> tuple[float, float]:
    """Exciton coupling magnitudes to the two standing-wave supermodes."""
    if g_tw < 0:
        raise ValueError("g_tw must be non-negative")
    return (g_tw * abs(1 + np.exp(1j * xi)) / SQRT2, g_tw * abs(1 - np.exp(1j * xi)) / SQRT2)


def mode_volume(factor: float, wavelength: float, index: float) -> float:
    """Mode volume expressed as ``factor * (wavelength / index)**3`` in m^3."""
    return factor * (wavelength / index) ** 3


def coupling_estimate(wavelength: float, index: float, tau_sp: float, volume: float, eta: float = 1.0) -> float:
    """Vacuum coupling rate (rad/s) of a dipole emitter to a traveling-wave mode of volume ``volume``."""
    if min(wavelength, index, tau_sp, volume) <= 0:
        raise ValueError("wavelength, index, tau_sp and volume must be positive")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return eta * math.sqrt(3 * SPEED_OF_LIGHT * wavelength**2 / (8 * math.pi * index**3 * tau_sp * volume))


@dataclass(frozen=True)
class SystemParams:
    """Model rates (rad/s) and detunings (m).

    ``wavelength`` is the exciton line; the cavity sits at
    ``wavelength + detuning_ca`` and the probe laser at
    ``wavelength + detuning_la``.
    """

    kappa_e: float
    kappa_i: float
    gamma_beta: float
    xi: float
    g_tw: float
    gamma_par: float
    gamma_p: float
    wavelength: float = 1297.5 * NM
    detuning_ca: float = 0.0
    detuning_la: float = 0.0

    def __post_init__(self):
        for name in ("kappa_e", "kappa_i", "gamma_beta", "g_tw", "gamma_par", "gamma_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @classmethod
    def from_ghz(
        cls,
        kappa_e: float,
        kappa_i: float,
        gamma_beta: float,
        xi_pi: float,
        g_tw: float,
        gamma_par: float,
        gamma_p: float,
        wavelength_nm: float = 1297.5,
        detuning_ca_pm: float = 0.0,
        detuning_la_pm: float = 0.0,
    ) -> "SystemParams":
        return cls(
            kappa_e=kappa_e * GHZ,
            kappa_i=kappa_i * GHZ,
            gamma_beta=gamma_beta * GHZ,
            xi=xi_pi * math.pi,
            g_tw=g_tw * GHZ,
            gamma_par=gamma_par * GHZ,
            gamma_p=gamma_p * GHZ,
            wavelength=wavelength_nm * NM,
            detuning_ca=detuning_ca_pm * PM,
            detuning_la=detuning_la_pm * PM,
        )

    @property
    def kappa_t(self) -> float:
        return self.kappa_i + 2.0 * self.kappa_e

    @property
    def gamma_perp(self) -> float:
        return 0.5 * self.gamma_par + self.gamma_p

    @property
    def g_sw(self) -> tuple[float, float]:
        return standing_wave_couplings(self.g_tw, self.xi)

    @property
    def omega0(self) -> float:
        return angular_frequency(self.wavelength)

    @property
    def cavity_exciton_detuning(self) -> float:
        """omega_c - omega_a in rad/s."""
        return float(angular_detuning(self.detuning_ca, self.wavelength))

    @property
    def laser_exciton_detuning(self) -> float:
        """omega_l - omega_a in rad/s."""
        return float(angular_detuning(self.detuning_la, self.wavelength))

    @property
    def bare_contrast(self) -> float:
        """Dip depth of the empty traveling-wave cavity, 8 ki ke / kT^2."""
        return contrast_from_rates(self.kappa_e, self.kappa_i)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    # JSON: rates as value/2pi in GHz, phase in units of pi, lengths in nm/pm
    def to_json_dict(self) -> dict:
        return {
            "kappa_e_ghz": self.kappa_e / GHZ,
            "kappa_i_ghz": self.kappa_i / GHZ,
            "gamma_beta_ghz": self.gamma_beta / GHZ,
            "xi_pi": self.xi / math.pi,
            "g_tw_ghz": self.g_tw / GHZ,
            "gamma_par_ghz": self.gamma_par / GHZ,
            "gamma_p_ghz": self.gamma_p / GHZ,
            "wavelength_nm": self.wavelength / NM,
            "detuning_ca_pm": self.detuning_ca / PM,
            "detuning_la_pm": self.detuning_la / PM,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SystemParams":
        allowed = set(JSON_KEYS)
        unknown = set(data) - allowed
        if unknown:
            raise KeyError(f"unknown system parameter key(s): {sorted(unknown)}")
        required = set(JSON_KEYS[:7])
        missing = required - set(data)
        if missing:
            raise KeyError(f"missing system parameter key(s): {sorted(missing)}")
        # strip the unit suffix: "kappa_e_ghz" -> "kappa_e"; "xi_pi" keeps its name
        kw = {(k if k == "xi_pi" else k.rsplit("_", 1)[0]): float(v) for k, v in data.items()}
        return cls.from_ghz(
            kappa_e=kw["kappa_e"],
            kappa_i=kw["kappa_i"],
            gamma_beta=kw["gamma_beta"],
            xi_pi=kw["xi_pi"],
            g_tw=kw["g_tw"],
            gamma_par=kw["gamma_par"],
            gamma_p=kw["gamma_p"],
            wavelength_nm=kw.get("wavelength", 1297.5),
            detuning_ca_pm=kw.get("detuning_ca", 0.0),
            detuning_la_pm=kw.get("detuning_la", 0.0),
        )


JSON_KEYS = (
    "kappa_e_ghz",
    "kappa_i_ghz",
    "gamma_beta_ghz",
    "xi_pi",
    "g_tw_ghz",
    "gamma_par_ghz",
    "gamma_p_ghz",
    "wavelength_nm",
    "detuning_ca_pm",
    "detuning_la_pm",
)


def table_ii(detuning_ca_pm: float = -12.0, wavelength_nm: float = 1297.5) -> SystemParams:
    """Fitted parameters of the strongly coupled device (cavity 12 pm blue of the exciton by default)."""
    return SystemParams.from_ghz(
        kappa_e=0.17,
        kappa_i=1.27,
        gamma_beta=1.99,
        xi_pi=0.25,
        g_tw=2.24,
        gamma_par=0.55,
        gamma_p=0.89,
        wavelength_nm=wavelength_nm,
        detuning_ca_pm=detuning_ca_pm,
    )


@dataclass(frozen=True)
class DriveSpec:
    """Probe laser launched into the taper.

    ``input_power`` is at the taper input; the power reaching the coupling
    region is ``sqrt(zeta) * input_power`` for symmetric taper loss.
    """

    input_power: float
    wavelength: float
    taper_transmission: float = 1.0

    def __post_init__(self):
        if self.input_power < 0:
            raise ValueError("input_power must be non-negative")
        if not 0.0 < self.taper_transmission <= 1.0:
            raise ValueError("taper_transmission must lie in (0, 1]")

    @property
    def power_wg(self) -> float:
        return math.sqrt(self.taper_transmission) * self.input_power

    @property
    def flux(self) -> float:
        """Photon flux |s|^2 (1/s) at the coupling region."""
        return self.power_wg / photon_energy(self.wavelength)

    def amplitude(self, params: SystemParams) -> float:
        """Drive amplitude E = 2 sqrt(ke) |s| in rad/s."""
        return 2.0 * math.sqrt(params.kappa_e * self.flux)

    def calibrated_photon_number(self, params: SystemParams) -> float:
        """On-resonance photon number of the empty traveling-wave cavity, 4 ke |s|^2 / kT^2."""
        return 4.0 * params.kappa_e * self.flux / params.kappa_t**2

    def dropped_power(self, params: SystemParams) -> float:
        return params.bare_contrast * self.power_wg

    @classmethod
    def from_flux(cls, flux: float, wavelength: float) -> "DriveSpec":
        return cls(input_power=flux * photon_energy(wavelength), wavelength=wavelength)

    @classmethod
    def from_photon_number(cls, params: SystemParams, n_cav: float) -> "DriveSpec":
        """Drive whose calibrated empty-cavity photon number equals ``n_cav``."""
        if params.kappa_e <= 0:
            raise ValueError("kappa_e must be positive to drive the cavity")
        flux = n_cav * params.kappa_t**2 / (4.0 * params.kappa_e)
        return cls.from_flux(flux, params.wavelength)

    @classmethod
    def from_dropped_power(cls, params: SystemParams, p_dropped: float) -> "DriveSpec":
        return cls(input_power=p_dropped / params.bare_contrast, wavelength=params.wavelength)


@dataclass(frozen=True)
class HamiltonianParts:
    """H(laser) = static - (omega_l - omega_a) * excitation + drive_amplitude * drive."""

    static: sp.csr_matrix
    excitation: sp.csr_matrix
    drive: sp.csr_matrix
    ops: ModeOperators = field(repr=False)


def hamiltonian_parts(params: SystemParams, layout: HilbertLayout, ccw_phase: float = 0.0) -> HamiltonianParts:
    """Split the Hamiltonian into laser-independent, laser-detuning and drive pieces.

    ``ccw_phase`` puts a phase e^{i phi} on the exciton coupling to the ccw
    mode.  Relabeling a_ccw -> e^{-i phi} a_ccw shows this is the original
    model with ``xi`` raised by ``phi``, so observables must not change when
    ``xi`` is lowered by ``phi`` at the same time.
    """
    ops = ModeOperators.for_layout(layout)
    a1, a2, s = ops.a_cw, ops.a_ccw, ops.sigma
    a1d, a2d, sd = dagger(a1), dagger(a2), dagger(s)
    n_photon = a1d @ a1 + a2d @ a2
    n_exc = sd @ s
    backscatter = params.gamma_beta * np.exp(1j * params.xi) * (a1d @ a2)
    coupling = params.g_tw * (a1d @ s + np.exp(1j * ccw_phase) * (a2d @ s))
    static = (
        params.cavity_exciton_detuning * n_photon
        - (backscatter + dagger(backscatter))
        + coupling
        + dagger(coupling)
    )
    drive = 1j * (a1d - a1)
    return HamiltonianParts(
        static=canonical(static),
        excitation=canonical(n_photon + n_exc),
        drive=canonical(drive),
        ops=ops,
    )


def build_hamiltonian(
    params: SystemParams,
    drive: DriveSpec | None,
    layout: HilbertLayout,
    ccw_phase: float = 0.0,
) -> sp.csr_matrix:
    parts = hamiltonian_parts(params, layout, ccw_phase)
    h = parts.static - params.laser_exciton_detuning * parts.excitation
    if drive is not None:
        h = h + drive.amplitude(params) * parts.drive
    return canonical(h)


def build_collapse_ops(params: SystemParams, layout: HilbertLayout, ops: ModeOperators | None = None) -> list:
    """Cavity decay of each mode, exciton energy decay and pure dephasing."""
    ops = ops or ModeOperators.for_layout(layout)
    out = [
        math.sqrt(2.0 * params.kappa_t) * ops.a_cw,
        math.sqrt(2.0 * params.kappa_t) * ops.a_ccw,
        math.sqrt(params.gamma_par) * ops.sigma,
        math.sqrt(2.0 * params.gamma_p) * (dagger(ops.sigma) @ ops.sigma),
    ]
    return [canonical(c) for c in out]


def supermode_couplings(params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Eigenfrequencies of the photonic 2x2 block and the exciton coupling to each supermode.

    Independent check of the gauge: diagonalizes the cavity block directly.
    """
    block = np.array(
        [
            [params.cavity_exciton_detuning, -params.gamma_beta * np.exp(1j * params.xi)],
            [-params.gamma_beta * np.exp(-1j * params.xi), params.cavity_exciton_detuning],
        ]
    )
    w, v = np.linalg.eigh(block)
    g = np.abs(v.conj().T @ np.array([params.g_tw, params.g_tw]))
    return w, g


def describe(params: SystemParams) -> dict:
    d = params.to_json_dict()
    d["kappa_t_ghz"] = params.kappa_t / GHZ
    d["gamma_perp_ghz"] = params.gamma_perp / GHZ
    g1, g2 = params.g_sw
    d["g_sw1_ghz"], d["g_sw2_ghz"] = float(g1 / GHZ), float(g2 / GHZ)
    return d


__all__ = [
    "SystemParams",
    "DriveSpec",
    "HamiltonianParts",
    "table_ii",
    "standing_wave_couplings",
    "coupling_estimate",
    "mode_volume",
    "hamiltonian_parts",
    "build_hamiltonian",
    "build_collapse_ops",
    "supermode_couplings",
    "describe",
]
