"""Saturation of the vacuum Rabi doublet with increasing drive.

A reduced version of the full sweep (Fock cutoff 5, 81 grid points) so it
finishes in well under a minute.  The acceptance suite runs the full one.
"""

import numpy as np

from diskqed import experiments, model, solver

p = model.table_ii()
n_values = [1e-3, 0.03, 0.1, 0.3, 0.6]
curve = experiments.power_sweep(
    p, experiments.drives_for_photon_numbers(p, n_values), grid_pm=solver.default_grid(p, 81), n_max=5
)
print(f"contrast probed at the bare-cavity dip, {curve.contrast_offset_pm:.3f} pm")
print("   n_cav   splitting(pm)   peak R    1-T   truncated")
for row in zip(curve.n_cav, curve.splitting_pm, curve.peak_reflection, curve.contrast, curve.truncated):
    print("{:8.3g}   {:10.2f}   {:8.4f}  {:6.4f}   {}".format(*row))

# half-saturation comparison against a curve that saturates ten times later
n = np.logspace(-3, 2, 200)
cmp_ = experiments.compare_saturation_curves((n, n / (n + 0.1)), (n, n / (n + 1.0)))
print(f"\nhalf-saturation ratio of two model curves: {cmp_.ratio:.2f}")
