"""How many photons sit in the cavity for a given taper measurement?

Stored-energy calibration from input power, taper transmission, dip contrast
and loaded Q, with the error budget propagated to the photon number.
"""

from diskqed import experiments, model
from diskqed.units import NM, CalibInput, UncertaintyBudget, intracavity_photon_number, propagate_ncav_uncertainty

inp = CalibInput(input_power=1e-9, taper_transmission=0.49, contrast=0.6, loaded_q=1e5, wavelength=1300 * NM)
res = intracavity_photon_number(inp, UncertaintyBudget())
print(f"1 nW in, 60% dip, Q = 1e5: n_cav = {res.photon_number:.4f} +- {res.relative_uncertainty:.1%}")
print(f"  intrinsic Q {res.intrinsic_q:.4g}, coupling parameter K = {res.coupling_parameter:.3f}")

# which budget entries dominate
for name in UncertaintyBudget.__dataclass_fields__:
    only = UncertaintyBudget.zero().__class__(**{k: (getattr(UncertaintyBudget(), k) if k == name else 0.0)
                                                 for k in UncertaintyBudget.__dataclass_fields__})
    print(f"  {name:15s} alone -> {propagate_ncav_uncertainty(inp, only):.2%}")

# The same formula applied to the simulated empty doublet, as a measurement would.
p = model.table_ii()
cal = experiments.empty_cavity_calibration(p)
print(f"\nreference empty cavity: long-wavelength dip at {cal.dip_offset_pm:.3f} pm, contrast {cal.contrast:.3f}")
for n in (1e-3, 0.1, 1.0):
    d = cal.drive_for(n)
    print(f"  n_cav = {n:<6g} needs P_in = {d.input_power * 1e9:8.3f} nW (dropped {cal.dropped_power(d) * 1e9:.3f} nW)")
