"""Frequency-domain design of iPD controllers.

Workflow: pick alpha from the plant's peak magnitude, then bound the (Kp, Kd)
plane with a module-condition ellipse and a phase-condition line, and finally
check each candidate against the true closed-loop poles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ipd import IpdConfig, ipd_open_loop_tf
from .tf import (STABILITY_MARGIN, DiscreteTransferFunction, FrequencyGrid, PoleOnUnitCircle, eval_freq, feedback,
                 is_stable, minreal, _rel_residual)

RULES = ("exact-first", "upper-first", "exact-second", "upper-second")


@dataclass(frozen=True)
class AlphaBound:
    bound: float
    rule: str
    margin: float
    alpha_design: float
    grid: FrequencyGrid
    omega_peak: float

    def to_dict(self):
        return {
            "bound": self.bound,
            "rule": self.rule,
            "margin": self.margin,
            "alpha_design": self.alpha_design,
            "omega_peak": self.omega_peak,
            "grid": {"omega_min": self.grid.omega_min, "omega_max": self.grid.omega_max,
                     "points": self.grid.points, "spacing": self.grid.spacing},
        }


def _grid_for(g, grid):
    grid = FrequencyGrid.default(g.ts) if grid is None else grid
    return grid.check(g.ts)


def _filter_den(c, ts, w):
    return c + (1 - c) * np.exp(-1j * w * ts)


def alpha_bound(g, c=1.0, n=1, rule="upper-first", grid=None, margin=10.0):
    """Smallest alpha for which the inner loop behaves like the direct chain.

    ``upper-*`` rules only use max|G|; ``exact-*`` rules include the derivative
    filter denominator. For C >= 1 the exact value never exceeds the upper one.
    Raises :class:`PoleOnUnitCircle` if the magnitude is not finite on the grid.
    Exactly cancelling pole/zero pairs are removed first: a derivative feeding an
    integrator leaves a removable singularity at z = 1 that would otherwise swamp
    the low-frequency evaluation in rounding noise.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    if rule.endswith("first") and n != 1 or rule.endswith("second") and n != 2:
        raise ValueError(f"rule {rule!r} does not match ultra-local order n={n}")
    grid = _grid_for(g, grid)
    w = grid.omegas()
    ts = g.ts
    mag = np.abs(eval_freq(minreal(g), w))
    if rule == "exact-first":
        mag = mag / np.abs(_filter_den(c, ts, w)) / ts
    elif rule == "upper-first":
        mag = mag / ts
    elif rule == "exact-second":
        mag = mag / np.abs(_filter_den(c, ts, w)) ** 2 / ts ** 2
    else:
        mag = 2 * mag / ts ** 2
    bad = ~np.isfinite(mag)
    if bad.any():
        raise PoleOnUnitCircle(float(w[bad][0]))
    i = int(np.argmax(mag))
    return AlphaBound(float(mag[i]), rule, margin, float(mag[i] * margin), grid, float(w[i]))


def alpha_bound_vs_cutoff(g, cutoffs, c=1.0, n=1, rule="upper-first", points=4096):
    """Bound as a function of the lower grid frequency (for integrating plants)."""
    wn = np.pi / g.ts
    return np.array([alpha_bound(g, c, n, rule, FrequencyGrid(wc, wn, points)).bound for wc in cutoffs])


def _phase_track(tf, w):
    return np.unwrap(np.angle(eval_freq(tf, w)))


def phase_crossover(tf, grid=None, rtol=1e-6):
    """First frequency where the unwrapped phase reaches -pi, or None.

    A crossing exactly at the Nyquist frequency is reported as pi/ts.
    """
    grid = _grid_for(tf, grid)
    w = grid.omegas()
    h = eval_freq(tf, w)
    ph = np.unwrap(np.angle(h))
    s = ph + np.pi
    idx = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0) | (s[:-1] < 0) & (s[1:] >= 0))
    if idx.size == 0:
        if abs(s[-1]) < 1e-9:
            return float(w[-1])
        return None
    i = idx[0]
    if s[i + 1] == 0:
        return float(w[i + 1])
    lo, hi = w[i], w[i + 1]
    h_lo, s_lo = h[i], s[i]
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        sm = s_lo + np.angle(eval_freq(tf, mid) / h_lo)
        if np.sign(sm) == np.sign(s_lo) and sm != 0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def unwrapped_phase_at(tf, omega, grid=None):
    """Phase of ``tf`` at ``omega`` unwrapped continuously from the bottom of the grid."""
    grid = _grid_for(tf, grid)
    w = grid.omegas()
    omega = float(omega)
    w = np.append(w[w < omega], omega) if omega > w[0] else np.array([omega])
    return float(_phase_track(tf, w)[-1])


def filtered_plant(g, c):
    """G(z) / (C + (1 - C) z^-1), whose phase crossover selects the binding ellipse."""
    return DiscreteTransferFunction(g.num, np.convolve(g.den, [c, 1 - c]), g.ts)


@dataclass(frozen=True)
class ModuleConditionTerms:
    b: float
    c_prime: float
    c_dprime: float
    kp_scaled: float

    @classmethod
    def at(cls, c, ts, omega, kp=0.0):
        return cls(float(np.cos(omega * ts)), c - 1.0, 2 * c - 1.0, kp * ts)


@dataclass(frozen=True)
class ModuleEllipse:
    """q11 Kp'^2 + 2 q12 Kp' Kd + q22 Kd^2 <= rhs with Kp' = Kp*Ts.

    At the Nyquist frequency the form is only positive semi-definite and the
    set degenerates to a strip between two parallel lines.
    """

    q11: float
    q12: float
    q22: float
    rhs: float
    omega: float
    ts: float
    g_mag: float

    @property
    def degenerate(self):
        det = self.q11 * self.q22 - self.q12 ** 2
        return det <= 1e-12 * (self.q11 * self.q22)

    def lhs(self, kp, kd):
        x = np.asarray(kp, dtype=float) * self.ts
        kd = np.asarray(kd, dtype=float)
        return self.q11 * x * x + 2 * self.q12 * x * kd + self.q22 * kd * kd

    def contains(self, kp, kd):
        return self.lhs(kp, kd) <= self.rhs

    def extents(self):
        """Half-widths (Kp, Kd) of the ellipse; axis intercepts when degenerate."""
        if self.degenerate:
            return np.sqrt(self.rhs / self.q11) / self.ts, np.sqrt(self.rhs / self.q22)
        det = self.q11 * self.q22 - self.q12 ** 2
        return np.sqrt(self.rhs * self.q22 / det) / self.ts, np.sqrt(self.rhs * self.q11 / det)

    def boundary(self, npts=400):
        """(Kp, Kd) samples on the boundary. Empty for a degenerate form."""
        if self.degenerate:
            return np.zeros(0), np.zeros(0)
        q = np.array([[self.q11, self.q12], [self.q12, self.q22]])
        lam, v = np.linalg.eigh(q)
        t = np.linspace(0, 2 * np.pi, npts, endpoint=False)
        pts = v @ (np.sqrt(self.rhs / lam)[:, None] * np.vstack([np.cos(t), np.sin(t)]))
        return pts[0] / self.ts, pts[1]

    def to_dict(self):
        return {"q11": self.q11, "q12": self.q12, "q22": self.q22, "rhs": self.rhs,
                "omega": self.omega, "ts": self.ts, "g_mag": self.g_mag}


def _ellipse_from_mag(gmag, alpha, c, ts, omega):
    t = ModuleConditionTerms.at(c, ts, omega)
    b, cp, cpp = t.b, t.c_prime, t.c_dprime
    q11 = (2 * c * cp + 1) - 2 * c * cp * b
    q12 = cpp * (1 - b)
    q22 = 2 * (1 - b)
    rhs = (alpha * ts / gmag) ** 2 * (c ** 2 + cp ** 2 - 2 * c * cp * b) * (2 - 2 * b)
    return ModuleEllipse(float(q11), float(q12), float(q22), float(rhs), float(omega), ts, float(gmag))


def module_ellipse(g, alpha, c, ts, omega):
    """Module condition at one frequency as a quadratic form in (Kp*Ts, Kd)."""
    if not 0 < omega <= np.pi / ts * (1 + 1e-12):
        raise ValueError("omega must lie in (0, pi/ts]")
    if g.ts != ts:
        raise ValueError("plant sample time differs from ts")
    gmag = abs(eval_freq(g, omega))
    if gmag == 0:
        raise ValueError(f"|G| vanishes at omega={omega}; the ellipse is unbounded")
    return _ellipse_from_mag(gmag, alpha, c, ts, omega)


def simplified_module_bound(g, alpha, c, ts, variant="conservative", omega0=None, grid=None):
    """Module ellipse with |G| replaced by max|G| (conservative) or |G(w1)| (permissive).

    The cosine term is taken at ``omega0`` (computed if not given).
    """
    grid = _grid_for(g, grid)
    if omega0 is None:
        omega0 = phase_crossover(filtered_plant(g, c), grid)
        if omega0 is None:
            raise ValueError("no phase crossover of G/(C+(1-C)z^-1) on the grid")
    if variant == "conservative":
        gmag = float(np.abs(eval_freq(g, grid.omegas())).max())
    elif variant == "permissive":
        w1 = phase_crossover(g, grid)
        if w1 is None:
            raise ValueError("plant has no phase crossover; the permissive bound is undefined")
        gmag = abs(eval_freq(g, w1))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return _ellipse_from_mag(gmag, alpha, c, ts, omega0)


def phase_condition(g, c, ts, omega, kp, kd, grid=None, inner_phase=None):
    """Full first-order phase requirement at ``omega``: arg(iPD*G) > -pi (vectorised over gains)."""
    th = omega * ts
    if inner_phase is None:
        inner_phase = unwrapped_phase_at(filtered_plant(g, c), omega, grid) + th / 2 - np.pi / 2
    kps = np.asarray(kp, dtype=float) * ts
    kd = np.asarray(kd, dtype=float)
    a = kps * c + kd + 1
    b = kps * (c - 1) + kd + 1
    lead = np.angle(a - b * np.exp(-1j * th))
    return lead + inner_phase > -np.pi


@dataclass(frozen=True)
class PhaseLineTerms:
    w: float
    omega: float


@dataclass(frozen=True)
class PhaseLine:
    """Kd = slope*Kp + intercept; ``side`` is +1 when the feasible half-plane is above.

    ``vertical`` marks the W = 1 case, where the line is Kp = 0 and ``side``
    refers to the sign of Kp. ``side == 0`` means probing could not decide.
    """

    slope: float
    intercept: float
    side: int
    omega: float
    w: float
    vertical: bool = False

    def kd_at(self, kp):
        return self.slope * np.asarray(kp, dtype=float) + self.intercept

    def satisfies(self, kp, kd):
        kp = np.asarray(kp, dtype=float)
        kd = np.asarray(kd, dtype=float)
        if self.side == 0:
            return np.ones(np.broadcast(kp, kd).shape, dtype=bool)
        d = kp if self.vertical else kd - self.kd_at(kp)
        return self.side * d > 0

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "side": self.side,
                "omega": self.omega, "w": self.w, "vertical": self.vertical}


def phase_line_terms(g, c, ts, omega, grid=None):
    th = omega * ts
    phi = unwrapped_phase_at(filtered_plant(g, c), omega, grid) + th / 2 - np.pi / 2
    s = np.sin(phi)
    if s == 0:
        return PhaseLineTerms(np.inf, omega), phi
    # sin/tan written as sin*cos/sin so that tan -> inf gives W = cos
    return PhaseLineTerms(float(np.cos(th) - np.sin(th) * np.cos(phi) / s), omega), phi


def phase_line(g, c, ts, omega, grid=None, probe_kp=None):
    """Equality case of the first-order phase condition at ``omega``.

    The feasible side is found by probing the full phase condition just above
    and below the line rather than by sign analysis.
    """
    if g.ts != ts:
        raise ValueError("plant sample time differs from ts")
    terms, phi = phase_line_terms(g, c, ts, omega, grid)
    w = terms.w
    if np.isinf(w):
        slope, intercept, vertical = -ts * (c - 1), -1.0, False
    elif np.isclose(w, 1.0, rtol=0, atol=1e-12):
        slope, intercept, vertical = 0.0, 0.0, True
    else:
        slope, intercept, vertical = ts * (c - w * (c - 1)) / (w - 1), -1.0, False

    probes = [probe_kp] if probe_kp is not None else [1.0 / ts, 10.0 / ts, 0.1 / ts, 100.0 / ts]
    side = 0
    for kp in probes:
        if vertical:
            lo, hi = (-1e-3, 0.0), (1e-3, 0.0)
        else:
            kd0 = slope * kp + intercept
            eps = 1e-6 * (1 + abs(kd0))
            lo, hi = (kp, kd0 - eps), (kp, kd0 + eps)
        above = bool(phase_condition(g, c, ts, omega, *hi, inner_phase=phi))
        below = bool(phase_condition(g, c, ts, omega, *lo, inner_phase=phi))
        if above != below:
            side = 1 if above else -1
            break
    return PhaseLine(float(slope), float(intercept), side, float(omega), float(w), vertical)


def simplified_phase_line(c, ts, kp_range=None):
    """Necessary condition 2(Kd + 1) > -Kp Ts (2C - 1) as a half-plane above a line."""
    return PhaseLine(-ts * (2 * c - 1) / 2, -1.0, 1, 0.0, np.nan)


# relative residual below which a pole/zero pair is cancelled before closing the loop
CANCEL_TOL = 1e-12


def closed_loop_stable(g, cfg, cancel_tol=CANCEL_TOL):
    """True when unity error feedback around iPD(z)*G(z) has all poles inside the unit circle.

    The open loop first goes through :func:`minreal` with ``cancel_tol`` so that
    the iPD integrator cancels an exact differentiator in the plant (e.g. a
    speed model seen through its acceleration). Pass ``cancel_tol=None`` to
    keep every mode.
    """
    loop = ipd_open_loop_tf(g, cfg)
    if cancel_tol is not None:
        loop = minreal(loop, cancel_tol)
    return is_stable(feedback(loop))


@dataclass
class StabilityRegion:
    alpha: float
    c: float
    ts: float
    n: int
    omega0: float | None
    omega1: float | None
    ellipse: ModuleEllipse
    line: PhaseLine | None
    simplified_line: PhaseLine
    kp: np.ndarray
    kd: np.ndarray
    predicted: np.ndarray
    stable: np.ndarray
    conservative: ModuleEllipse | None = None
    permissive: ModuleEllipse | None = None
    phase_mode: str = "complete"
    flags: list = field(default_factory=list)

    @property
    def resolution(self):
        return len(np.unique(self.kp)), len(np.unique(self.kd))

    def config(self, i):
        return IpdConfig(self.n, self.alpha, float(self.kp[i]), float(self.kd[i]), self.c, self.ts)

    def summary(self):
        p, s = self.predicted, self.stable
        return {
            "points": int(p.size),
            "predicted": int(p.sum()),
            "stable": int(s.sum()),
            "predicted_and_stable": int((p & s).sum()),
            "stable_outside_prediction": int((s & ~p).sum()),
            "precision": float((p & s).sum() / p.sum()) if p.any() else float("nan"),
            "omega0": self.omega0,
            "omega1": self.omega1,
            "phase_mode": self.phase_mode,
            "flags": list(self.flags),
        }

    def conditions_dict(self):
        return {
            "alpha": self.alpha, "c": self.c, "ts": self.ts, "n": self.n,
            "omega0": self.omega0, "omega1": self.omega1,
            "ellipse": self.ellipse.to_dict(),
            "line": None if self.line is None else self.line.to_dict(),
            "simplified_line": self.simplified_line.to_dict(),
            "conservative": None if self.conservative is None else self.conservative.to_dict(),
            "permissive": None if self.permissive is None else self.permissive.to_dict(),
            "phase_mode": self.phase_mode,
        }


def _default_range(ellipse, predicate, probe=201):
    """Non-negative box around the predicted set, found on a probe grid.

    Starts from 1.1x the ellipse extents and shrinks to the predicted points
    plus one probe step; falls back to the full box if nothing is predicted.
    """
    kpx, kdx = (1.1 * float(v) for v in ellipse.extents())
    kp = np.linspace(0.0, kpx, probe)
    kd = np.linspace(0.0, kdx, probe)
    KP, KD = np.meshgrid(kp, kd, indexing="ij")
    hit = predicate(KP, KD)
    if not hit.any():
        return (0.0, kpx), (0.0, kdx)
    kp_hi = min(kpx, KP[hit].max() + kp[1])
    kd_hi = min(kdx, KD[hit].max() + kd[1])
    return (0.0, float(kp_hi)), (0.0, float(kd_hi))


def build_region(g, alpha, c, ts=None, n=1, kp_range=None, kd_range=None, resolution=101,
                 grid=None, verify=True, cancel_tol=CANCEL_TOL):
    """Predicted and verified stability of a Kp-Kd grid.

    Prediction: inside the module ellipse at w0 and on the feasible side of the
    phase line at w0/2 (n = 1), or the simplified phase half-plane (n = 2).
    Verification: closed-loop poles of the error-feedback loop.
    """
    ts = g.ts if ts is None else ts
    if ts != g.ts:
        raise ValueError("plant sample time differs from ts")
    grid = _grid_for(g, grid)
    flags = []
    omega0 = phase_crossover(filtered_plant(g, c), grid)
    omega1 = phase_crossover(g, grid)
    if omega0 is None:
        w = grid.omegas()
        wpk = float(w[np.argmax(np.abs(eval_freq(g, w)))])
        flags.append("omega0-not-found: module condition taken at the peak-magnitude frequency")
        warnings.warn(flags[-1], RuntimeWarning, stacklevel=2)
        ellipse = module_ellipse(g, alpha, c, ts, wpk)
    else:
        ellipse = module_ellipse(g, alpha, c, ts, omega0)

    simple = simplified_phase_line(c, ts)
    line = None
    phase_mode = "complete"
    if n == 1 and omega0 is not None:
        line = phase_line(g, c, ts, omega0 / 2, grid)
        if line.side == 0:
            flags.append("phase-line-side-undetermined")
    else:
        phase_mode = "simplified"
        if n == 2:
            flags.append("n=2: no complete phase condition; simplified half-plane used")

    ref = omega0 if omega0 is not None else ellipse.omega
    conservative = simplified_module_bound(g, alpha, c, ts, "conservative", ref, grid)
    permissive = simplified_module_bound(g, alpha, c, ts, "permissive", ref, grid) if omega1 else None

    def predicate(kp, kd):
        ok = ellipse.contains(kp, kd)
        return ok & (line.satisfies(kp, kd) if line is not None else simple.satisfies(kp, kd))

    if kp_range is None or kd_range is None:
        dkp, dkd = _default_range(ellipse, predicate)
        kp_range = dkp if kp_range is None else kp_range
        kd_range = dkd if kd_range is None else kd_range
    kps = np.linspace(kp_range[0], kp_range[1], resolution)
    kds = np.linspace(kd_range[0], kd_range[1], resolution)
    KP, KD = np.meshgrid(kps, kds, indexing="ij")
    kp, kd = KP.ravel(), KD.ravel()

    predicted = predicate(kp, kd)

    if verify:
        stable = stability_mask(g, alpha, c, ts, n, kp, kd, cancel_tol)
    else:
        stable = np.zeros_like(predicted)

    return StabilityRegion(alpha, c, ts, n, omega0, omega1, ellipse, line, simple, kp, kd,
                           predicted, stable, conservative, permissive, phase_mode, flags)


def _compensator_parts(alpha, c, ts, n):
    """Numerator of the iPD compensator as kp*A + kd*B + E over a fixed denominator."""
    delta = np.array([c, 1.0 - c])
    diff = np.array([1.0, -1.0]) / ts
    if n == 1:
        a, b, e = delta, diff, diff
        den = alpha * np.convolve(delta, [1.0, -1.0])
    else:
        a, b = np.convolve(delta, delta), np.convolve(diff, delta)
        e = np.convolve(diff, diff)
        den = alpha * np.convolve(np.convolve(delta, delta), [1.0, -1.0])
    m = max(len(a), len(b), len(e))
    pad = lambda v: np.pad(v, (0, m - len(v)))
    return pad(a), pad(b), pad(e), den


def _divide_root(p, r):
    # p ascending in z^-1; remove the factor (1 - r z^-1)
    q, _ = np.polydiv(p[::-1], np.array([-r, 1.0]))
    return np.real(q[::-1])


def stability_mask(g, alpha, c, ts, n, kp, kd, cancel_tol=CANCEL_TOL):
    """Vectorised :func:`closed_loop_stable` over many (Kp, Kd) pairs.

    Cancellations that do not depend on the gains (plant pole/zero pairs, plant
    zeros on the compensator's fixed poles) are removed once; the closed-loop
    characteristic polynomials are then solved as a stack of companion matrices.
    """
    kp = np.ravel(np.asarray(kp, dtype=float))
    kd = np.ravel(np.asarray(kd, dtype=float))
    a, b, e, den_c = _compensator_parts(alpha, c, ts, n)
    gn, gd = np.array(g.num, dtype=float), np.array(g.den, dtype=float)
    if cancel_tol is not None:
        gr = minreal(g, cancel_tol)
        gn, gd = np.array(gr.num, dtype=float), np.array(gr.den, dtype=float)
        for r in [1.0] + [(c - 1.0) / c] * n:
            # plant zero sitting on a fixed compensator pole
            if np.any(gn) and _rel_residual(gn[::-1], r) < cancel_tol:
                gn = _divide_root(gn, r)
                den_c = _divide_root(den_c, r)
    num_l = np.convolve(a, gn)[None, :] * kp[:, None] + np.convolve(b, gn)[None, :] * kd[:, None]
    num_l = num_l + np.convolve(e, gn)[None, :]
    den_l = np.convolve(den_c, gd)
    m = max(num_l.shape[1], den_l.size)
    char = np.pad(num_l, ((0, 0), (0, m - num_l.shape[1]))) + np.pad(den_l, (0, m - den_l.size))[None, :]
    lead = char[:, 0]
    out = np.empty(kp.size, dtype=bool)
    ok = np.abs(lead) > 1e-12 * np.abs(char).max(axis=1)
    deg = m - 1
    if deg == 0:
        out[:] = True
        return out
    if ok.any():
        cc = char[ok] / lead[ok, None]
        comp = np.zeros((cc.shape[0], deg, deg))
        comp[:, 0, :] = -cc[:, 1:]
        comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
        rho = np.abs(np.linalg.eigvals(comp)).max(axis=1)
        out[ok] = rho < 1 - STABILITY_MARGIN
    for i in np.flatnonzero(~ok):
        out[i] = closed_loop_stable(g, IpdConfig(n, alpha, float(kp[i]), float(kd[i]), c, ts), cancel_tol)
    return out


def best_config_search(region, plant, y_ref=None, criterion="iae", servo=True, u_limits=None,
                       horizon=10.0, candidates="stable"):
    """Simulate every verified-stable grid configuration and keep the best one.

    ``candidates="stable"`` uses all verified-stable points; ``"predicted"``
    restricts to points that are both predicted and verified. Ties go to the
    lower Kd, then the lower Kp. Without saturation the servo loop is LTI, so
    candidates are run through the closed-loop transfer function instead of
    the sample-by-sample controller; IAUDD then needs the explicit simulation.
    """
    from .sim import compute_metrics, simulate_loop, simulate_loop_lti

    mask = region.stable if candidates == "stable" else region.stable & region.predicted
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("region has no verified-stable configuration")
    if y_ref is None:
        y_ref = np.ones(int(round(horizon / region.ts)) + 1)
    order = sorted(idx, key=lambda i: (region.kd[i], region.kp[i]))
    best, best_val = None, np.inf
    for i in order:
        cfg = region.config(i)
        if u_limits is None and servo and criterion != "iaudd":
            tr = simulate_loop_lti(plant, cfg, y_ref)
        else:
            tr = simulate_loop(plant, cfg, y_ref, servo=servo, u_limits=u_limits)
        val = np.inf if tr.diverged else getattr(compute_metrics(tr), criterion)
        if val < best_val:
            best, best_val = cfg, val
    if best is None:
        raise ValueError("every candidate diverged in simulation")
    return best
