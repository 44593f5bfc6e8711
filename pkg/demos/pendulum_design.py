"""Designing an iPD for an inverted pendulum on a cart.

Run:  python3 demos/pendulum_design.py [output_dir]

The walk-through goes from the physical model to a verified controller:
alpha from the plant's peak gain, a (Kp, Kd) search region from the module
and phase conditions, a pole check of every grid point, and finally a
comparison of the best grid configuration against a hand-tuned one.
"""

import sys
from pathlib import Path

import numpy as np

from mfcdesign import export, plants
from mfcdesign.design import alpha_bound, best_config_search, build_region, closed_loop_stable
from mfcdesign.sim import compute_metrics, simulate_loop, step_reference

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")

# 1. The plant: cart force to pendulum angle, sampled with a zero-order hold at 100 Hz.
params = plants.PendulumParams()
g = plants.pendulum_discrete(params)
print("pendulum G(z) num", np.round(g.num, 8), "den", np.round(g.den, 6))
print("open-loop pole moduli", np.round(np.abs(np.roots(g.den)), 4))

# 2. alpha must dominate the plant gain so the inner loop acts like a pure integrator chain.
b = alpha_bound(g, c=4.0, n=1, rule="upper-first")
print(f"\nalpha bound {b.bound:.4f} (peak at {b.omega_peak:.3g} rad/s), design value x10 = {b.alpha_design:.2f}")

# 3. The stability set for the alpha actually used on the rig.
cfg = plants.PENDULUM_DESIGNED
region = build_region(g, cfg.alpha, cfg.c, resolution=61)
s = region.summary()
print(f"\nphase crossover w0 = {s['omega0']:.4f} rad/s, plant crossover w1 = {s['omega1']:.4f} rad/s")
print(f"{s['predicted']} of {s['points']} grid points predicted, {s['predicted_and_stable']} of them verify")
print(f"{s['stable_outside_prediction']} stable points lie outside the prediction (the conditions are not exact)")

# 4. Check two settings and pick the best grid point for a 10 s unit step.
y_ref = step_reference(1001)
for label, c in (("designed", cfg), ("hand-tuned", plants.PENDULUM_ITERATIVE)):
    m = compute_metrics(simulate_loop(g, c, y_ref))
    print(f"{label:>10}: Kp={c.kp} Kd={c.kd} stable={closed_loop_stable(g, c)} IAE={m.iae:.4f} OS={m.os:.4f}")
best = best_config_search(region, g, y_ref)
m = compute_metrics(simulate_loop(g, best, y_ref))
print(f"{'best grid':>10}: Kp={best.kp:.2f} Kd={best.kd:.2f} IAE={m.iae:.4f} OS={m.os:.4f}")

export.write_bundle({
    out / "pendulum_region.svg": export.region_svg(region, title="pendulum, alpha=170.06, C=4"),
    out / "pendulum_region.csv": export.region_csv(region),
    out / "pendulum_best_step.csv": simulate_loop(g, best, y_ref).to_csv(),
})
print(f"\nregion plot and traces written to {out}/")
