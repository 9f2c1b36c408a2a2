"""Fit synthetic spectra and check what comes back.

A bare-cavity doublet fit, then a joint fit of g_tw, xi and gamma_p to five
noisy transmission/reflection columns.  Takes about a minute.
"""

import math

import numpy as np

from diskqed import fitting, model, solver
from diskqed.fitting import SpectrumData
from diskqed.units import GHZ, PM

rng = np.random.default_rng(2024)
truth = model.table_ii()

# bare doublet
x = np.linspace(-40, 40, 301)
t = fitting.doublet_transmission(x, 0.0, truth.kappa_t, truth.kappa_e, truth.gamma_beta, truth.wavelength)
t = t + rng.normal(0, 0.02 * t.max(), x.size)
z = np.zeros_like(x)
bare = fitting.fit_bare_cavity(solver.Spectrum(x, t, z, z, z, z, truth.wavelength), noise_sigma=0.02 * t.max())
print("bare fit:", {k: f"{v:.3f}" + (f" +- {bare.uncertainty[k]:.3f}" if k in bare.uncertainty else "") for k, v in bare.values.items()})
print(f"truth (GHz)   : kappa_T {truth.kappa_t / GHZ:.3f}, kappa_e {truth.kappa_e / GHZ:.3f}, gamma_beta {truth.gamma_beta / GHZ:.3f}")

# coupled system, five cavity offsets, 2% noise
cols = []
for d in (-24.0, -12.0, 0.0, 12.0, 24.0):
    s = solver.weak_drive_spectrum(truth.with_(detuning_ca=d * PM), np.linspace(d / 2 - 35, d / 2 + 35, 121))
    s.transmission = s.transmission + rng.normal(0, 0.02 * np.abs(s.transmission).max(), s.transmission.size)
    s.reflection = s.reflection + rng.normal(0, 0.02 * np.abs(s.reflection).max(), s.reflection.size)
    cols.append(SpectrumData(s, d))
start = truth.with_(g_tw=2.0 * GHZ, xi=0.4 * math.pi, gamma_p=0.6 * GHZ)
res = fitting.fit_qme(cols, start, seed=0)
print("\njoint fit:", {k: f"{v:.4f} +- {res.uncertainty[k]:.4f}" for k, v in res.values.items()})
print("truth    : g_tw 2.24 GHz, xi 0.25 pi, gamma_p 0.89 GHz;  converged:", res.converged)

# power-law exponent of a saturation-free signal
p = np.logspace(-9, -6, 10)
print("\npower law on P^1.5 data: x =", fitting.fit_power_law(p, 4.2 * p**1.5).values["x"])
