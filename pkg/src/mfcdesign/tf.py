"""Discrete transfer functions in powers of z^-1.

Coefficients are stored in ascending powers of z^-1, i.e. ``num = [b0, b1, b2]``
means ``b0 + b1 z^-1 + b2 z^-2``. The denominator is normalised so that its
leading coefficient is 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import signal

# relative residual accepted for a polished root
ROOT_RESIDUAL_TOL = 1e-8
STABILITY_MARGIN = 1e-9


class SampleTimeMismatch(ValueError):
    pass


class PoleOnUnitCircle(ZeroDivisionError):
    def __init__(self, omega):
        super().__init__(f"denominator vanishes at omega={omega!r} rad/s")
        self.omega = omega


class RootFindingError(ArithmeticError):
    """Raised when polished roots still leave a large polynomial residual."""

    def __init__(self, msg, best):
        super().__init__(msg)
        self.best = best


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1]


@dataclass(frozen=True, eq=False)
class DiscreteTransferFunction:
    num: np.ndarray
    den: np.ndarray
    ts: float

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if den[0] == 0.0:
            raise ValueError("leading denominator coefficient must be non-zero")
        if not self.ts > 0:
            raise ValueError(f"sample time must be positive, got {self.ts}")
        num = num / den[0]
        den = den / den[0]
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "ts", float(self.ts))

    @classmethod
    def gain(cls, k, ts):
        return cls([k], [1.0], ts)

    @classmethod
    def delay(cls, steps, ts):
        return cls([0.0] * steps + [1.0], [1.0], ts)

    @property
    def order(self):
        return len(self.den) - 1

    @property
    def is_strictly_proper(self):
        return self.num[0] == 0.0

    def __call__(self, omega):
        return eval_freq(self, omega)

    def __repr__(self):
        return f"DiscreteTransferFunction(num={self.num.tolist()}, den={self.den.tolist()}, ts={self.ts})"

    def __eq__(self, other):
        if not isinstance(other, DiscreteTransferFunction):
            return NotImplemented
        return (self.ts == other.ts and np.array_equal(self.num, other.num)
                and np.array_equal(self.den, other.den))

    __hash__ = None

    def __mul__(self, other):
        if isinstance(other, DiscreteTransferFunction):
            return series(self, other)
        return DiscreteTransferFunction(self.num * other, self.den, self.ts)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, DiscreteTransferFunction):
            other = DiscreteTransferFunction.gain(other, self.ts)
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return DiscreteTransferFunction(-self.num, self.den, self.ts)

    def __sub__(self, other):
        return self + (-other)

    def to_dict(self):
        return {"num": self.num.tolist(), "den": self.den.tolist(), "ts": self.ts}

    @classmethod
    def from_dict(cls, d):
        return cls(d["num"], d["den"], d["ts"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ContinuousSecondOrder:
    """k / (a2 s^2 + a1 s + a0)."""

    a2: float
    a1: float
    a0: float
    k: float

    def __post_init__(self):
        if self.a2 == 0:
            raise ValueError("a2 must be non-zero for a second-order system")

    @property
    def dc_gain(self):
        return self.k / self.a0

    def poles(self):
        return np.roots([self.a2, self.a1, self.a0])


@dataclass(frozen=True)
class FrequencyGrid:
    omega_min: float
    omega_max: float
    points: int = 4096
    spacing: str = "log"

    def __post_init__(self):
        if not 0 < self.omega_min < self.omega_max:
            raise ValueError("need 0 < omega_min < omega_max")
        if self.points < 2:
            raise ValueError("a frequency grid needs at least two points")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    @classmethod
    def default(cls, ts, points=4096, decades_below_nyquist=None):
        """Log grid from 2*pi/(1e4*ts) up to the Nyquist frequency."""
        wn = np.pi / ts
        wmin = 2 * np.pi / (1e4 * ts) if decades_below_nyquist is None else wn * 10.0 ** -decades_below_nyquist
        return cls(wmin, wn, points, "log")

    def check(self, ts):
        # tiny slack for rounding in pi/ts
        if self.omega_max > np.pi / ts * (1 + 1e-12):
            raise ValueError(f"grid exceeds the Nyquist frequency {np.pi / ts}")
        return self

    def omegas(self):
        if self.spacing == "log":
            w = np.geomspace(self.omega_min, self.omega_max, self.points)
        else:
            w = np.linspace(self.omega_min, self.omega_max, self.points)
        w[-1] = self.omega_max
        return w


def _check_ts(a, b):
    if a.ts != b.ts:
        raise SampleTimeMismatch(f"sample times differ: {a.ts} vs {b.ts}")


def eval_freq(tf, omega):
    """Evaluate ``tf`` at z = exp(i omega ts). Accepts scalars or arrays."""
    w = np.asarray(omega, dtype=float)
    if np.any(np.abs(w) > np.pi / tf.ts * (1 + 1e-12)):
        raise ValueError("omega outside [-pi/ts, pi/ts]")
    zi = np.exp(-1j * w * tf.ts)
    n = np.polyval(tf.num[::-1], zi)
    d = np.polyval(tf.den[::-1], zi)
    # zero up to rounding relative to the coefficient magnitudes
    hit = np.abs(d) <= 1e-13 * np.abs(tf.den).sum()
    if np.any(hit):
        bad = w[hit] if w.ndim else w
        raise PoleOnUnitCircle(np.atleast_1d(bad)[0].item())
    out = n / d
    return out if w.ndim else complex(out)


def eval_z(tf, z):
    """Evaluate at an arbitrary complex z (no unit-circle restriction)."""
    zi = 1.0 / np.asarray(z, dtype=complex)
    return np.polyval(tf.num[::-1], zi) / np.polyval(tf.den[::-1], zi)


def _companion(c):
    # c: descending powers, c[0] != 0
    c = np.asarray(c, dtype=float)
    n = len(c) - 1
    m = np.zeros((n, n))
    m[0, :] = -c[1:] / c[0]
    m[1:, :-1] = np.eye(n - 1)
    return m


def _polish(c, r, iters=3):
    dc = np.polyder(c)
    for _ in range(iters):
        p = np.polyval(c, r)
        dp = np.polyval(dc, r)
        ok = dp != 0
        step = np.where(ok, p / np.where(ok, dp, 1), 0)
        cand = r - step
        better = np.abs(np.polyval(c, cand)) < np.abs(p)
        r = np.where(better, cand, r)
    return r


def poly_roots(c):
    """Roots of a polynomial given in descending powers.

    Companion-matrix eigenvalues followed by a Newton polish that is only kept
    where it lowers the residual. Raises :class:`RootFindingError` when the
    relative residual exceeds ``ROOT_RESIDUAL_TOL``.
    """
    c = np.trim_zeros(np.asarray(c, dtype=float), "f")
    if len(c) <= 1:
        return np.zeros(0, dtype=complex)
    # zero roots from trailing zeros are exact
    nz = len(c) - len(np.trim_zeros(c, "b"))
    core = c[: len(c) - nz]
    r = np.linalg.eigvals(_companion(core)) if len(core) > 1 else np.zeros(0, complex)
    r = _polish(core, r.astype(complex))
    scale = np.polyval(np.abs(core), np.abs(r))
    resid = np.abs(np.polyval(core, r)) / np.where(scale > 0, scale, 1)
    if np.any(resid > ROOT_RESIDUAL_TOL):
        raise RootFindingError(f"root residual {resid.max():.3g} above tolerance", r)
    return np.concatenate([r, np.zeros(nz, dtype=complex)])


def poles(tf):
    """Poles in the z-plane. ``den`` in z^-1 read left-to-right is the z polynomial in descending powers."""
    return poly_roots(tf.den)


def is_stable(tf, margin=STABILITY_MARGIN):
    p = poles(tf)
    return bool(np.all(np.abs(p) < 1 - margin))


def series(a, b):
    _check_ts(a, b)
    return DiscreteTransferFunction(np.convolve(a.num, b.num), np.convolve(a.den, b.den), a.ts)


def _padd(p, q):
    n = max(len(p), len(q))
    return np.pad(p, (0, n - len(p))) + np.pad(q, (0, n - len(q)))


def add(a, b):
    _check_ts(a, b)
    num = _padd(np.convolve(a.num, b.den), np.convolve(b.num, a.den))
    return DiscreteTransferFunction(num, np.convolve(a.den, b.den), a.ts)


def feedback(forward, back=None, sign=-1):
    """forward / (1 - sign*forward*back); negative feedback by default."""
    if back is None:
        back = DiscreteTransferFunction.gain(1.0, forward.ts)
    _check_ts(forward, back)
    num = np.convolve(forward.num, back.den)
    den = _padd(np.convolve(forward.den, back.den), -sign * np.convolve(forward.num, back.num))
    return DiscreteTransferFunction(num, den, forward.ts)


def _z_polys(tf):
    # multiply through by z^K so both become ordinary polynomials in z
    k = max(len(tf.num), len(tf.den))
    return np.pad(tf.num, (0, k - len(tf.num))), np.pad(tf.den, (0, k - len(tf.den)))


def zeros(tf):
    nz, _ = _z_polys(tf)
    if not np.any(nz):
        return np.zeros(0, dtype=complex)
    return poly_roots(nz)


def _rel_residual(c, r):
    # c descending; |c(r)| relative to the sum of term magnitudes
    with np.errstate(over="ignore", invalid="ignore"):
        scale = np.polyval(np.abs(c), abs(r))
        res = abs(np.polyval(c, r)) / scale if scale > 0 else 0.0
    # a root too large to evaluate never counts as a common factor
    return res if np.isfinite(res) else np.inf


def _deflate(c, r):
    """Divide a descending polynomial by (z - r), or by the real quadratic of r and conj(r)."""
    if abs(r.imag) > 0:
        q, _ = np.polydiv(c, np.real(np.poly([r, np.conj(r)])))
    else:
        q, _ = np.polydiv(c, np.array([1.0, -r.real]))
    return np.real(q)


def minreal(tf, tol=1e-12):
    """Remove common pole/zero factors. The only place cancellation happens.

    A numerator zero ``r`` is cancelled when the denominator's relative
    residual at ``r`` is below ``tol``; both polynomials are then deflated by
    the factor. Real roots within 1e-9 of +-1 are snapped before deflation so
    that integrator/differentiator pairs cancel exactly.
    """
    nz, dz = _z_polys(tf)
    nz = np.trim_zeros(nz, "f") if np.any(nz) else nz
    dz = np.trim_zeros(dz, "f")
    changed = True
    while changed and len(nz) > 1 and len(dz) > 1:
        changed = False
        for r in poly_roots(nz):
            if abs(r.imag) < 1e-12:
                r = complex(r.real, 0.0)
                for snap in (1.0, -1.0, 0.0):
                    if abs(r.real - snap) < 1e-9:
                        r = complex(snap, 0.0)
            if abs(r.imag) > 0 and r.imag < 0:
                continue
            if _rel_residual(dz, r) < tol:
                nz = _deflate(nz, r)
                dz = _deflate(dz, r)
                changed = True
                break
    k = max(len(nz), len(dz))
    num = np.pad(nz, (k - len(nz), 0))
    den = np.pad(dz, (k - len(dz), 0))
    # equal-length descending z polynomials are z^-1 coefficient lists
    return DiscreteTransferFunction(num, den, tf.ts)


def impulse_response(tf, n):
    x = np.zeros(n)
    x[0] = 1.0
    return signal.lfilter(tf.num, tf.den, x)


def response(tf, u):
    return signal.lfilter(tf.num, tf.den, np.asarray(u, dtype=float))


def discretize(sys: ContinuousSecondOrder, ts: float, method: str = "zoh") -> DiscreteTransferFunction:
    """Sampled equivalent of a continuous second-order system.

    ``method`` is ``"zoh"`` (default) or ``"tustin"``.
    """
    if not ts > 0:
        raise ValueError("ts must be positive")
    m = {"zoh": "zoh", "tustin": "bilinear"}[method]
    num, den, _ = signal.cont2discrete(([sys.k], [sys.a2, sys.a1, sys.a0]), ts, method=m)
    num = np.ravel(num)
    # positive-power coefficients of equal length map directly onto z^-1 powers
    num = np.pad(num, (len(den) - len(num), 0))
    num[np.abs(num) < 1e-15 * np.abs(num).max()] = 0.0
    return DiscreteTransferFunction(num, den, ts)


def discretize_zoh(sys, ts):
    return discretize(sys, ts, "zoh")


def discretize_tustin(sys, ts):
    return discretize(sys, ts, "tustin")


def unwrapped_phase(tf, omegas):
    """Phase along an increasing frequency vector, unwrapped from the first point."""
    return np.unwrap(np.angle(eval_freq(tf, omegas)))


def as_tf(obj, ts=None) -> DiscreteTransferFunction:
    """Coerce a dict, JSON string or transfer function."""
    if isinstance(obj, DiscreteTransferFunction):
        return obj
    if isinstance(obj, str):
        obj = json.loads(obj)
    if isinstance(obj, dict):
        return DiscreteTransferFunction.from_dict(obj)
    raise TypeError(f"cannot build a transfer function from {type(obj).__name__}")
