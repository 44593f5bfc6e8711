"""End-to-end reruns of the two worked examples with a pass/fail report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import export, plants
from .design import (alpha_bound, alpha_bound_vs_cutoff, best_config_search, build_region, closed_loop_stable,
                     simplified_phase_line)
from .ipd import ipd_open_loop_tf
from .sim import CascadeSpec, compute_metrics, simulate_cascade, simulate_loop, speed_profile, step_reference
from .tf import FrequencyGrid, feedback, minreal, poles

# values quoted for the worked examples
PENDULUM_BOUND = 17.006
VEHICLE_INNER_BOUND = 147.63
VEHICLE_OUTER_BOUND = 15864.4


@dataclass
class Check:
    name: str
    passed: bool | None  # None: informational
    detail: str

    def line(self):
        tag = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        return f"[{tag}] {self.name}: {self.detail}"


@dataclass
class Report:
    case: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def add(self, name, passed, detail):
        self.checks.append(Check(name, None if passed is None else bool(passed), detail))

    def text(self):
        out = [f"{self.case} reproduction", ""]
        out += [c.line() for c in self.checks]
        for title, rows in self.tables.items():
            out += ["", title]
            out += ["  " + "  ".join(f"{v:>14.6g}" if isinstance(v, float) else f"{v:>14}" for v in r) for r in rows]
        return "\n".join(out) + "\n"

    def to_dict(self):
        return {"case": self.case,
                "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
                "tables": {k: [list(r) for r in v] for k, v in self.tables.items()}}


def decays(trace, windows=10, ratio=1e-2):
    """|e| envelope test: window maxima never grow and the last is a small fraction of the first."""
    e = np.abs(np.asarray(trace.e))
    if trace.diverged or not np.all(np.isfinite(e)):
        return False
    env = np.array([w.max() for w in np.array_split(e, windows)])
    return bool(np.all(np.diff(env) <= 1e-12 * env[0]) and env[-1] <= ratio * env[0])


def _timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t


def reproduce(case, points=4096, resolution=101, seed=0):
    if case == "pendulum":
        return reproduce_pendulum(points, resolution)
    if case == "vehicle":
        return reproduce_vehicle(points, resolution, seed)
    raise ValueError(f"unknown case {case!r}")


def reproduce_pendulum(points=4096, resolution=101):
    rep = Report("pendulum")
    ts = plants.PENDULUM_TS
    grid = FrequencyGrid.default(ts, points)
    g = plants.pendulum_discrete()
    b, dt = _timed(alpha_bound, g, 4.0, 1, "upper-first", grid)
    bt = alpha_bound(plants.pendulum_discrete(method="tustin"), 4.0, 1, "upper-first", grid)
    err = abs(b.bound - PENDULUM_BOUND) / PENDULUM_BOUND
    rep.add("alpha bound (ZOH, upper-first, C=4)", err <= 0.05 and dt < 1.0,
            f"{b.bound:.4f} vs {PENDULUM_BOUND} ({100 * err:.2f}% off, tol 5%), {dt * 1e3:.0f} ms")
    rep.add("alpha bound (Tustin)", None,
            f"{bt.bound:.4f} ({100 * abs(bt.bound - PENDULUM_BOUND) / PENDULUM_BOUND:.2f}% off)")

    y_ref = step_reference(int(round(10.0 / ts)) + 1)
    traces = {}
    for label, cfg in (("designed", plants.PENDULUM_DESIGNED), ("iterative", plants.PENDULUM_ITERATIVE)):
        st = closed_loop_stable(g, cfg)
        tr = simulate_loop(g, cfg, y_ref)
        traces[label] = tr
        ok = decays(tr)
        rep.add(f"{label} config alpha={cfg.alpha} Kp={cfg.kp} Kd={cfg.kd}", st and ok,
                f"poles stable={st}, 10 s step decays={ok}")

    region = build_region(g, plants.PENDULUM_DESIGNED.alpha, 4.0, ts, 1, resolution=resolution, grid=grid)
    s = region.summary()
    rep.add("region precision (>= 50% of predicted verify)", s["precision"] >= 0.5,
            f"{s['predicted_and_stable']}/{s['predicted']} = {s['precision']:.3f} on {resolution}x{resolution}")
    half = simplified_phase_line(4.0, ts).satisfies(region.kp, region.kd)
    viol = int((region.stable & ~half).sum())
    rep.add("necessary half-plane", viol == 0, f"{viol} stable configurations violate it")

    best = best_config_search(region, g, y_ref)
    m_best = compute_metrics(simulate_loop(g, best, y_ref))
    m_des = compute_metrics(traces["designed"])
    m_it = compute_metrics(traces["iterative"])
    rel = abs(m_best.iae - m_it.iae) / m_it.iae
    rep.add("best grid config vs iterative IAE", rel <= 0.15,
            f"best Kp={best.kp:.4g} Kd={best.kd:.4g} IAE {m_best.iae:.4f} vs {m_it.iae:.4f} ({100 * rel:.1f}%, tol 15%)")
    rep.tables["step metrics (10 s, unit step)"] = [
        ("config", "IAE", "IAUDD", "OS"),
        ("designed", m_des.iae, m_des.iaudd, m_des.os),
        ("iterative", m_it.iae, m_it.iaudd, m_it.os),
        ("best-grid", m_best.iae, m_best.iaudd, m_best.os),
    ]
    rep.files["pendulum_region.csv"] = export.region_csv(region)
    rep.files["pendulum_region.json"] = export.region_json(region)
    rep.files["pendulum_region.svg"] = export.region_svg(region, title="pendulum, alpha=170.06, C=4")
    for label, tr in traces.items():
        rep.files[f"pendulum_{label}_trace.csv"] = tr.to_csv()
    return rep


def _ordering(region):
    complete = region.predicted
    simple = region.simplified_line.satisfies(region.kp, region.kd)
    cons = region.conservative.contains(region.kp, region.kd) & simple
    perm = region.permissive.contains(region.kp, region.kd) & simple
    return int((cons & ~complete).sum()), int((complete & ~perm).sum()), int(cons.sum()), int(perm.sum())


def reproduce_vehicle(points=4096, resolution=101, seed=0):
    rep = Report("vehicle")
    ts = plants.VEHICLE_TS
    g = plants.vehicle_tf()
    gi = plants.vehicle_inner_plant(g)
    grid = FrequencyGrid.default(ts, points)
    b, dt = _timed(alpha_bound, gi, 7.5, 1, "upper-first", grid)
    err = abs(b.bound - VEHICLE_INNER_BOUND) / VEHICLE_INNER_BOUND
    rep.add("inner alpha bound (C=7.5)", err <= 0.01 and dt < 1.0,
            f"{b.bound:.4f} vs {VEHICLE_INNER_BOUND} ({100 * err:.1f}% off, tol 1%), {dt * 1e3:.0f} ms")

    wn = np.pi / ts
    cutoffs = np.logspace(-3, -1, 9) * wn
    inner = plants.VEHICLE_FREQ_INNER
    rows = [("cutoff/wN", "bound (inner)", "bound (closed)")]
    curves = {}
    for loop in ("inner", "closed"):
        go = plants.vehicle_outer_plant(inner, g, loop=loop)
        curves[loop] = alpha_bound_vs_cutoff(go, cutoffs, 3.5, 1, "upper-first", points)
    for k, wc in enumerate(cutoffs):
        rows.append((float(wc / wn), float(curves["inner"][k]), float(curves["closed"][k])))
    rep.tables["outer alpha bound vs lower grid frequency"] = rows
    cur = curves["inner"]
    finite = bool(np.all(np.isfinite(cur)))
    mono = bool(np.all(np.diff(cur) <= 1e-9 * cur[:-1]))
    near = bool(np.any((cur >= VEHICLE_OUTER_BOUND / 3) & (cur <= 3 * VEHICLE_OUTER_BOUND)))
    rep.add("outer bound finite and non-increasing in the cutoff", finite and mono, f"finite={finite}, monotone={mono}")
    rep.add("outer bound within x3 of 15864.4 for some cutoff", near,
            f"range {cur.min():.4g} .. {cur.max():.4g}")

    region = build_region(gi, inner.alpha, inner.c, ts, 1, resolution=resolution, grid=grid)
    s = region.summary()
    bad = region.predicted & ~region.stable
    detail = f"{s['predicted_and_stable']}/{s['predicted']} verify on {resolution}x{resolution}"
    if bad.any():
        detail += f"; failures at Kp in [{region.kp[bad].min():.4g}, {region.kp[bad].max():.4g}]"
    rep.add("inner region soundness (all predicted verify)", not bad.any(), detail)
    c_out, p_out, nc, npm = _ordering(region)
    rep.add("conservative <= complete <= permissive", c_out == 0 and p_out == 0,
            f"{c_out} conservative points outside complete, {p_out} complete points outside permissive "
            f"(sizes {nc}, {s['predicted']}, {npm})")
    half = region.simplified_line.satisfies(region.kp, region.kd)
    viol = int((region.stable & ~half).sum())
    rep.add("necessary half-plane", viol == 0, f"{viol} stable configurations violate it")

    for label, cfg in (("freq inner", inner), ("iter inner", plants.VEHICLE_ITER_INNER)):
        rho = float(np.abs(poles(_closed(gi, cfg))).max())
        rep.add(f"{label} alpha={cfg.alpha} Kp={cfg.kp} Kd={cfg.kd}", None,
                f"max closed-loop pole modulus {rho:.5f}")
    for label, o, i in (("freq", plants.VEHICLE_FREQ_OUTER, inner),
                        ("iter", plants.VEHICLE_ITER_OUTER, plants.VEHICLE_ITER_INNER)):
        go = plants.vehicle_outer_plant(i, g, loop="closed")
        rho = float(np.abs(poles(_closed(go, o))).max())
        rep.add(f"{label} outer alpha={o.alpha} Kp={o.kp} Kd={o.kd}", None,
                f"max closed-loop pole modulus {rho:.5f} around the closed inner loop")

    v, a = speed_profile(600.0, ts, seed)
    rows = [("run", "IAE", "IAUDD", "OS", "max|e|", "diverged")]
    for label, (o, i) in (("freq", (plants.VEHICLE_FREQ_OUTER, inner)),
                          ("iter", (plants.VEHICLE_ITER_OUTER, plants.VEHICLE_ITER_INNER))):
        for sat in ((-1.0, 1.0), None):
            tr = simulate_cascade(CascadeSpec(o, i, g, u_limits=sat), v, a)
            tag = f"{label}{'' if sat else ' unsat'}"
            if len(tr) >= 3:
                m = compute_metrics(tr)
                emax = float(np.abs(tr.e).max())
                rows.append((tag, m.iae, m.iaudd, m.os, emax, str(tr.diverged)))
            else:
                rows.append((tag, "-", "-", "-", "-", str(tr.diverged)))
            if label == "freq" and sat:
                emax = float(np.abs(tr.e).max()) if len(tr) else float("inf")
                ok = not tr.diverged and emax <= 100 / 3.6
                rep.add("saturated cascade over the 0-100 km/h profile", ok,
                        f"diverged={tr.diverged} after {len(tr)} of {len(v)} samples, max|e|={emax:.4g} m/s")
                rep.files["vehicle_cascade_trace.csv"] = tr.to_csv()
    rep.tables["cascade metrics (600 s profile)"] = rows
    rep.files["vehicle_inner_region.csv"] = export.region_csv(region)
    rep.files["vehicle_inner_region.json"] = export.region_json(region)
    rep.files["vehicle_inner_region.svg"] = export.region_svg(region, title="vehicle inner loop, alpha=1475.05, C=7.5")
    return rep


def _closed(g, cfg):
    return feedback(minreal(ipd_open_loop_tf(g, cfg)))
