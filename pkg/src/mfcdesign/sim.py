"""Closed-loop simulation of iPD loops and the tracking metrics used to compare them."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .ipd import ControllerState, IpdConfig, closed_loop_tf, ipd_step
from .tf import DiscreteTransferFunction, response

DIVERGENCE_LIMIT = 1e9


class _Plant:
    """Difference-equation realisation of a strictly proper transfer function."""

    def __init__(self, tf: DiscreteTransferFunction):
        if not tf.is_strictly_proper:
            raise ValueError("plant must be strictly proper (num[0] == 0) to avoid an algebraic loop")
        self.b = tf.num[1:]
        self.a = tf.den[1:]
        self.u_hist = np.zeros(len(self.b))
        self.y_hist = np.zeros(len(self.a))

    def output(self):
        return float(self.b @ self.u_hist - self.a @ self.y_hist)

    def push(self, u, y):
        if self.u_hist.size:
            self.u_hist = np.roll(self.u_hist, 1)
            self.u_hist[0] = u
        if self.y_hist.size:
            self.y_hist = np.roll(self.y_hist, 1)
            self.y_hist[0] = y


@dataclass
class SimTrace:
    t: np.ndarray
    y_ref: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    ts: float
    diverged: bool = False
    inner: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def to_csv(self, fh=None):
        cols = ["t", "y_ref", "y", "e", "u"] + [f"inner_{k}" for k in self.inner]
        data = [self.t, self.y_ref, self.y, self.e, self.u] + list(self.inner.values())
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue() if fh is None else None


@dataclass(frozen=True)
class Metrics:
    iae: float
    iaudd: float
    os: float

    def to_dict(self):
        return {"iae": self.iae, "iaudd": self.iaudd, "os": self.os}

    def to_json(self):
        return json.dumps(self.to_dict())


def _clip(u, limits):
    if limits is None:
        return u
    return min(max(u, limits[0]), limits[1])


def _trace(ts, y_ref, y, u, k, diverged, inner=None):
    y_ref = np.asarray(y_ref[:k], dtype=float)
    y = np.asarray(y[:k])
    inner = {} if inner is None else {n: np.asarray(v[:k]) for n, v in inner.items()}
    return SimTrace(np.arange(k) * ts, y_ref, y, y_ref - y, np.asarray(u[:k]), ts, diverged, inner)


def simulate_loop(plant, cfg: IpdConfig, y_ref, servo=True, u_limits=None, disturbance=None,
                  noise_std=0.0, seed=0):
    """Run one iPD loop sample by sample.

    ``disturbance`` is added to the plant output before it is measured;
    ``noise_std`` adds seeded white noise to the measurement. Saturation is
    applied before the plant and the estimator sees the saturated action.
    The run stops early with ``diverged=True`` once |y| exceeds 1e9.
    """
    if plant.ts != cfg.ts:
        raise ValueError("plant and controller sample times differ")
    y_ref = np.asarray(y_ref, dtype=float)
    n = len(y_ref)
    d = np.zeros(n) if disturbance is None else np.asarray(disturbance, dtype=float)
    rng = np.random.default_rng(seed)
    p = _Plant(plant)
    st = ControllerState.for_config(cfg)
    y = np.zeros(n)
    u = np.zeros(n)
    for k in range(n):
        yk = p.output() + d[k]
        if abs(yk) > DIVERGENCE_LIMIT or not np.isfinite(yk):
            return _trace(cfg.ts, y_ref, y, u, k, True)
        meas = yk + (rng.normal(0.0, noise_std) if noise_std else 0.0)
        uk = _clip(ipd_step(st, cfg, meas, y_ref[k], servo), u_limits)
        st.u_prev = uk
        y[k] = yk
        u[k] = uk
        p.push(uk, yk - d[k])
    return _trace(cfg.ts, y_ref, y, u, n, False)


def simulate_loop_lti(plant, cfg, y_ref):
    """Servo-mode response via the closed-loop transfer function (no saturation, no noise)."""
    y_ref = np.asarray(y_ref, dtype=float)
    y = response(closed_loop_tf(plant, cfg), y_ref)
    u = np.full_like(y, np.nan)
    diverged = not np.all(np.isfinite(y)) or np.abs(y).max(initial=0) > DIVERGENCE_LIMIT
    return SimTrace(np.arange(len(y)) * cfg.ts, y_ref, y, y_ref - y, u, cfg.ts, bool(diverged))


@dataclass(frozen=True)
class CascadeSpec:
    outer: IpdConfig
    inner: IpdConfig
    plant: DiscreteTransferFunction
    inner_plant_derivation: bool = True
    accel_feedforward: bool = False
    u_limits: tuple | None = (-1.0, 1.0)
    outer_servo: bool = True
    inner_servo: bool = True
    bypass_outer: bool = False

    def __post_init__(self):
        if not self.outer.ts == self.inner.ts == self.plant.ts:
            raise ValueError("outer, inner and plant sample times must match")


def simulate_cascade(spec: CascadeSpec, y_ref, accel_ref=None):
    """Speed (outer) / acceleration (inner) cascade around one plant.

    The outer iPD turns the speed error into an acceleration reference; the
    inner iPD turns the acceleration error into the plant input. With
    ``accel_feedforward`` the supplied (or finite-difference) reference
    acceleration is added to the outer command. With ``bypass_outer`` the
    inner loop alone tracks ``y_ref`` as an acceleration reference.
    """
    ts = spec.plant.ts
    y_ref = np.asarray(y_ref, dtype=float)
    n = len(y_ref)
    if accel_ref is None:
        accel_ref = np.diff(y_ref, prepend=0.0) / ts
    accel_ref = np.asarray(accel_ref, dtype=float)
    p = _Plant(spec.plant)
    so = ControllerState.for_config(spec.outer)
    si = ControllerState.for_config(spec.inner)
    y = np.zeros(n)
    u = np.zeros(n)
    a_ref = np.zeros(n)
    a_meas = np.zeros(n)
    prev = 0.0
    for k in range(n):
        yk = p.output()
        if abs(yk) > DIVERGENCE_LIMIT or not np.isfinite(yk):
            return _trace(ts, y_ref, y, u, k, True, {"a_ref": a_ref, "a": a_meas})
        ak = (yk - prev) / ts if spec.inner_plant_derivation else yk
        if spec.bypass_outer:
            ar = y_ref[k]
        else:
            ar = ipd_step(so, spec.outer, yk, y_ref[k], spec.outer_servo)
            if spec.accel_feedforward:
                ar += accel_ref[k]
        uk = _clip(ipd_step(si, spec.inner, ak, ar, spec.inner_servo), spec.u_limits)
        si.u_prev = uk
        y[k], u[k], a_ref[k], a_meas[k] = yk, uk, ar, ak
        p.push(uk, yk)
        prev = yk
    inner = {"a_ref": a_ref, "a": a_meas}
    if spec.bypass_outer:
        # the tracked signal is the acceleration
        return SimTrace(np.arange(n) * ts, y_ref, a_meas, y_ref - a_meas, u, ts, False, {"speed": y})
    return _trace(ts, y_ref, y, u, n, False, inner)


def compute_metrics(trace: SimTrace) -> Metrics:
    """IAE, IAUDD and negative-error overshoot of a trace.

    IAE = Ts * sum|e|; IAUDD = sum|u_k - 2u_{k-1} + u_{k-2}| (no Ts factor);
    OS = largest -e over samples whose most recent reference change was upward.
    The reference is taken as 0 before the first sample.
    """
    e = np.asarray(trace.e, dtype=float)
    if len(e) < 3:
        raise ValueError("metrics need at least three samples")
    iae = float(trace.ts * np.abs(e).sum())
    u = np.asarray(trace.u, dtype=float)
    iaudd = float(np.abs(np.diff(u, 2)).sum()) if np.all(np.isfinite(u)) else float("nan")
    r = np.asarray(trace.y_ref, dtype=float)
    dr = np.diff(r, prepend=0.0)
    # direction of the most recent reference change at each sample
    last = np.where(dr != 0, np.sign(dr), np.nan)
    idx = np.where(~np.isnan(last), np.arange(len(last)), 0)
    np.maximum.accumulate(idx, out=idx)
    direction = last[idx]
    rising = direction > 0
    os_ = float(np.max(np.where(rising, np.maximum(0.0, -e), 0.0), initial=0.0))
    return Metrics(iae, iaudd, os_)


def speed_profile(duration=600.0, ts=0.05, seed=0, v_max=100 / 3.6, accel=(0.4, 1.5),
                  decel=(0.5, 2.0), hold=(5.0, 30.0)):
    """Seeded piecewise-constant-acceleration speed reference from rest.

    Targets are drawn uniformly on [0, v_max] so that visited speeds cover the
    whole range. Returns ``(v_ref, a_ref)`` in m/s and m/s^2.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration / ts)) + 1
    v = np.zeros(n)
    a = np.zeros(n)
    k, cur = 0, 0.0
    while k < n - 1:
        target = rng.uniform(0.0, v_max)
        rate = rng.uniform(*accel) if target > cur else -rng.uniform(*decel)
        steps = max(1, int(round(abs(target - cur) / abs(rate) / ts)))
        # adjust the rate so the ramp lands on the target
        rate = (target - cur) / (steps * ts)
        start = cur
        for j in range(1, steps + 1):
            if k >= n - 1:
                break
            k += 1
            cur = start + rate * ts * j
            v[k], a[k] = cur, rate
        hold_steps = int(rng.uniform(*hold) / ts)
        for _ in range(hold_steps):
            if k >= n - 1:
                break
            k += 1
            v[k], a[k] = cur, 0.0
    return v, a


def step_reference(n, amplitude=1.0, start=0):
    r = np.zeros(n)
    r[start:] = amplitude
    return r
