"""Complete versus simplified stability conditions.

Run:  python3 demos/simplified_conditions.py [output_dir]

The simplified method replaces the phase line by a half-plane that needs no
plant data, and the module ellipse by one built from a single plant
magnitude. Using max|G| gives a conservative ellipse; using |G| at the
plant's own phase crossover gives a permissive one. This script measures
how the three regions nest on the vehicle's inner loop and on the pendulum.
"""

import sys
from pathlib import Path

from mfcdesign import export, plants
from mfcdesign.design import build_region

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
cases = {
    "vehicle inner": (plants.vehicle_inner_plant(), plants.VEHICLE_FREQ_INNER.alpha, 7.5),
    "pendulum": (plants.pendulum_discrete(), plants.PENDULUM_DESIGNED.alpha, 4.0),
}
files = {}
for name, (g, alpha, c) in cases.items():
    r = build_region(g, alpha, c, resolution=81)
    half = r.simplified_line.satisfies(r.kp, r.kd)
    cons = r.conservative.contains(r.kp, r.kd) & half
    perm = r.permissive.contains(r.kp, r.kd) & half if r.permissive else half
    print(f"\n{name}: alpha={alpha} C={c}")
    for label, mask in (("conservative", cons), ("complete", r.predicted), ("permissive", perm)):
        n = int(mask.sum())
        ok = int((mask & r.stable).sum())
        print(f"  {label:>12}: {n:5d} points, {ok:5d} verified stable")
    print(f"  stable points violating the half-plane: {int((r.stable & ~half).sum())}")
    files[out / f"{name.replace(' ', '_')}_region.svg"] = export.region_svg(r, title=f"{name}, alpha={alpha}, C={c}")
export.write_bundle(files)
print(f"\nregion plots written to {out}/")
