"""Backscatter doublet, vacuum Rabi splitting and the anti-crossing map.

Run with ``python demos/01_doublet_and_anticrossing.py``; takes a few seconds.
"""

import numpy as np

from diskqed import analysis, experiments, model, solver
from diskqed.units import GHZ, PM, wavelength_detuning

p = model.table_ii(0.0)
print("model:", {k: round(v, 4) if isinstance(v, float) else v for k, v in model.describe(p).items()})

# Without the dot the cw/ccw pair splits into two standing-wave supermodes.
empty = p.with_(g_tw=0.0)
grid = np.linspace(-40, 40, 1601)
dips = analysis.find_extrema(solver.weak_drive_spectrum(empty, grid), "T")
print("\nempty cavity dips (pm):", np.round(dips.location_pm, 3))
print("2|gamma_beta| in pm    :", round(2 * abs(wavelength_detuning(p.gamma_beta, p.wavelength)) / PM, 3))
print("the dips overlap (|gamma_beta| is only ~1.2 kappa_T), so they sit slightly inside that value")

# With the dot on resonance, the supermode it couples to strongly splits into polaritons.
g1, g2 = p.g_sw
print(f"\nstanding-wave couplings: g_sw1 = {g1 / GHZ:.3f} GHz, g_sw2 = {g2 / GHZ:.3f} GHz")
s = solver.weak_drive_spectrum(p, np.linspace(-60, 60, 2401))
for ch in ("T", "R"):
    ex = analysis.find_extrema(s, ch)
    print(f"{ch} extrema (pm): {np.round(ex.location_pm, 2)}  values {np.round(ex.value, 4)}")

# Temperature tuning moves the cavity across the exciton in 12 pm steps.
sched = experiments.TuningSchedule.linear(12.0, 9)
amap = experiments.anticrossing_scan(p, sched, np.linspace(-120, 120, 2401))
print("\ncavity offset (pm)  ->  two deepest transmission dips (pm)")
for d, pair in zip(amap.detuning_ca_pm, amap.doublet_pm):
    print(f"{d:8.1f}  ->  {np.round(pair, 2)}")
sep, where = amap.minimum_separation()
print(f"minimum dip separation {sep:.2f} pm at cavity offset {where:.1f} pm")
