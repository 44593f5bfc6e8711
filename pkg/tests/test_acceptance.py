"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line
(also collected in the terminal summary) before asserting."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mfcdesign import plants
from mfcdesign.design import (alpha_bound, alpha_bound_vs_cutoff, best_config_search, build_region,
                              closed_loop_stable, module_ellipse, simplified_phase_line)
from mfcdesign.ipd import IpdConfig, closed_loop_tf, filtered_derivative_tf
from mfcdesign.reproduce import decays
from mfcdesign.sim import CascadeSpec, compute_metrics, simulate_cascade, simulate_loop, speed_profile, step_reference
from mfcdesign.tf import FrequencyGrid, eval_freq, impulse_response

PENDULUM_BOUND = 17.006
VEHICLE_INNER_BOUND = 147.63
VEHICLE_OUTER_BOUND = 15864.4


def verdict(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    print("\n" + line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def pendulum():
    return plants.pendulum_discrete()


@pytest.fixture(scope="module")
def inner_plant():
    return plants.vehicle_inner_plant()


@pytest.fixture(scope="module")
def pendulum_region(pendulum):
    return build_region(pendulum, plants.PENDULUM_DESIGNED.alpha, 4.0, resolution=101)


@pytest.fixture(scope="module")
def inner_region(inner_plant):
    cfg = plants.VEHICLE_FREQ_INNER
    return build_region(inner_plant, cfg.alpha, cfg.c, resolution=101)


def test_criterion_01_pendulum_alpha_bound(pendulum):
    t = time.perf_counter()
    b = alpha_bound(pendulum, 4.0, 1, "upper-first", FrequencyGrid.default(pendulum.ts))
    dt = time.perf_counter() - t
    tustin = alpha_bound(plants.pendulum_discrete(method="tustin"), 4.0, 1, "upper-first").bound
    err = abs(b.bound - PENDULUM_BOUND) / PENDULUM_BOUND
    verdict(1, err <= 0.05 and dt < 1.0,
            f"ZOH bound {b.bound:.4f} vs {PENDULUM_BOUND} ({100 * err:.2f}%, tol 5%), Tustin {tustin:.4f}, "
            f"{1e3 * dt:.0f} ms")


def test_criterion_02_vehicle_inner_alpha_bound(inner_plant):
    t = time.perf_counter()
    b = alpha_bound(inner_plant, 7.5, 1, "upper-first", FrequencyGrid.default(inner_plant.ts))
    dt = time.perf_counter() - t
    err = abs(b.bound - VEHICLE_INNER_BOUND) / VEHICLE_INNER_BOUND
    verdict(2, err <= 0.01 and dt < 1.0,
            f"bound {b.bound:.4f} vs {VEHICLE_INNER_BOUND} ({100 * err:.1f}%, tol 1%), {1e3 * dt:.0f} ms")


def test_criterion_03_vehicle_outer_bound_vs_cutoff():
    g = plants.vehicle_tf()
    wn = np.pi / g.ts
    cutoffs = np.logspace(-3, -1, 41) * wn
    fine = np.logspace(-6, 0, 25) * wn * (1 - 1e-9)
    curves = {}
    for loop in ("inner", "closed"):
        go = plants.vehicle_outer_plant(plants.VEHICLE_FREQ_INNER, g, loop=loop)
        curves[loop] = (alpha_bound_vs_cutoff(go, cutoffs, 3.5), alpha_bound_vs_cutoff(go, fine, 3.5))
    cur, wide = curves["inner"]
    finite = bool(np.all(np.isfinite(wide)) and np.all(wide > 0))
    mono = bool(np.all(np.diff(wide) <= 1e-9 * wide[:-1]) and np.all(np.diff(cur) <= 1e-9 * cur[:-1]))
    near = bool(np.any((cur >= VEHICLE_OUTER_BOUND / 3) & (cur <= 3 * VEHICLE_OUTER_BOUND)))
    closed = curves["closed"][0]
    verdict(3, finite and mono and near,
            f"finite={finite}, non-increasing={mono}, within x3 of {VEHICLE_OUTER_BOUND} for a cutoff in "
            f"[1e-3, 1e-1] wN: {near} (bound spans {cur.min():.4g}..{cur.max():.4g}; "
            f"around the closed inner loop {closed.min():.4g}..{closed.max():.4g})")


def test_criterion_04_pendulum_configs_stable(pendulum):
    y_ref = step_reference(int(round(10.0 / pendulum.ts)) + 1)
    parts, ok = [], True
    for cfg in (plants.PENDULUM_DESIGNED, plants.PENDULUM_ITERATIVE):
        st = closed_loop_stable(pendulum, cfg)
        dec = decays(simulate_loop(pendulum, cfg, y_ref))
        ok &= st and dec
        parts.append(f"alpha={cfg.alpha} Kp={cfg.kp} Kd={cfg.kd}: poles stable={st}, decays={dec}")
    verdict(4, ok, "; ".join(parts))


def test_criterion_05_inner_region_soundness(inner_region):
    r = inner_region
    bad = r.predicted & ~r.stable
    n_pred = int(r.predicted.sum())
    detail = (f"{n_pred - int(bad.sum())}/{n_pred} predicted points verify stable on 101x101 over "
              f"Kp in [0, {r.kp.max():.4g}], Kd in [0, {r.kd.max():.4g}]")
    if bad.any():
        detail += f"; failures at Kp in [{r.kp[bad].min():.4g}, {r.kp[bad].max():.4g}]"
    verdict(5, n_pred > 0 and not bad.any(), detail)


def test_criterion_06_simplified_ordering(inner_region):
    r = inner_region
    half = r.simplified_line.satisfies(r.kp, r.kd)
    cons = r.conservative.contains(r.kp, r.kd) & half
    perm = r.permissive.contains(r.kp, r.kd) & half
    c_out = int((cons & ~r.predicted).sum())
    p_out = int((r.predicted & ~perm).sum())
    verdict(6, c_out == 0 and p_out == 0,
            f"{c_out} conservative points outside complete, {p_out} complete points outside permissive "
            f"(sizes {int(cons.sum())}, {int(r.predicted.sum())}, {int(perm.sum())})")


def test_criterion_07_half_plane_necessity(pendulum_region, inner_region):
    parts, total = [], 0
    for name, r in (("pendulum", pendulum_region), ("vehicle inner", inner_region)):
        # 2(Kd + 1) > -Kp Ts (2C - 1), written out directly
        half = 2 * (r.kd + 1) > -r.kp * r.ts * (2 * r.c - 1)
        assert np.array_equal(half, simplified_phase_line(r.c, r.ts).satisfies(r.kp, r.kd))
        v = int((r.stable & ~half).sum())
        total += v
        parts.append(f"{name}: {v} of {int(r.stable.sum())} stable points violate")
    verdict(7, total == 0, "; ".join(parts))


def test_criterion_08_ellipse_matches_direct_magnitude(pendulum, inner_plant):
    rng = np.random.default_rng(2024)
    agree, total, inside = 0, 0, 0
    for g in (pendulum, inner_plant):
        ts = g.ts
        for _ in range(5000):
            w = rng.uniform(1e-3, 1.0) * np.pi / ts
            c = rng.uniform(0.6, 10.0)
            alpha = 10 ** rng.uniform(0, 4)
            e = module_ellipse(g, alpha, c, ts, w)
            kpx, kdx = e.extents()
            kp = rng.uniform(-1.5, 1.5) * kpx
            kd = rng.uniform(-1.5, 1.5) * kdx
            zi = np.exp(-1j * w * ts)
            d = eval_freq(filtered_derivative_tf(c, ts), w)
            direct = abs((kp + kd * d) * eval_freq(g, w) / (alpha * (1 - zi))) < 1
            agree += bool(e.contains(kp, kd)) == direct
            inside += direct
            total += 1
    verdict(8, agree == total and 0 < inside < total,
            f"{agree}/{total} samples agree ({inside} inside the module condition)")


def _random_stable(g, rng, count, alpha_lo):
    out = []
    while len(out) < count:
        c = rng.uniform(1.0, 8.0)
        alpha = alpha_lo * 10 ** rng.uniform(0, 1.5)
        cfg = IpdConfig(1, alpha, rng.uniform(0, 3) * alpha / 10 ** rng.uniform(0, 2),
                        rng.uniform(0, 1) * alpha / 10 ** rng.uniform(0, 3), c, g.ts)
        if closed_loop_stable(g, cfg):
            out.append(cfg)
    return out


def test_criterion_09_simulation_matches_transfer_function(pendulum, inner_plant):
    rng = np.random.default_rng(9)
    x = np.zeros(500)
    x[0] = 1.0
    worst = 0.0
    for g, lo in ((pendulum, 17.0), (inner_plant, 70.0)):
        for cfg in _random_stable(g, rng, 20, lo):
            sim = simulate_loop(g, cfg, x).y
            tf = impulse_response(closed_loop_tf(g, cfg), 500)
            worst = max(worst, float(np.abs(sim - tf).max()))
    verdict(9, worst <= 1e-8, f"40 random stable configs, max |sim - tf| = {worst:.3g} (tol 1e-8)")


def test_criterion_10_saturated_cascade():
    g = plants.vehicle_tf()
    v, a = speed_profile(600.0, g.ts, seed=0)
    tr = simulate_cascade(CascadeSpec(plants.VEHICLE_FREQ_OUTER, plants.VEHICLE_FREQ_INNER, g,
                                      u_limits=(-1.0, 1.0)), v, a)
    emax = float(np.abs(tr.e).max()) if len(tr) else float("inf")
    sat_ok = bool(np.all(np.abs(tr.u) <= 1.0))
    detail = f"diverged={tr.diverged} after {len(tr)} of {len(v)} samples, |u|<=1: {sat_ok}, max|e|={emax:.4g} m/s"
    if len(tr) >= 3:
        m = compute_metrics(tr)
        detail += f", IAE {m.iae:.4g} IAUDD {m.iaudd:.4g} OS {m.os:.4g}"
    verdict(10, not tr.diverged and sat_ok and emax <= 100 / 3.6, detail)


def test_criterion_11_design_vs_iterative(pendulum, pendulum_region):
    y_ref = step_reference(int(round(10.0 / pendulum.ts)) + 1)
    best = best_config_search(pendulum_region, pendulum, y_ref)
    iae_best = compute_metrics(simulate_loop(pendulum, best, y_ref)).iae
    iae_it = compute_metrics(simulate_loop(pendulum, plants.PENDULUM_ITERATIVE, y_ref)).iae
    rel = abs(iae_best - iae_it) / iae_it
    verdict(11, rel <= 0.15,
            f"best grid config Kp={best.kp:.4g} Kd={best.kd:.4g} IAE {iae_best:.4f} vs iterative {iae_it:.4f} "
            f"({100 * rel:.1f}%, tol 15%)")
