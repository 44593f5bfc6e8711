"""Intelligent PD controller on an ultra-local model y^(n) = F + alpha*u.

The runtime law is

    F_hat(k) = y_hat^(n)(k) - alpha * u(k-1)
    u(k)     = (-F_hat + y_r^(n) + Kp*e + Kd*e_dot) / alpha

with every derivative taken through the filtered operator

    D(z) = (1/Ts) (1 - z^-1) / (C + (1 - C) z^-1).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .tf import DiscreteTransferFunction, feedback, series


@dataclass(frozen=True)
class IpdConfig:
    n: int
    alpha: float
    kp: float
    kd: float
    c: float
    ts: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"ultra-local order must be 1 or 2, got {self.n}")
        if self.alpha == 0:
            raise ValueError("alpha must be non-zero")
        if not self.ts > 0:
            raise ValueError("ts must be positive")
        if self.c == 0:
            raise ValueError("filter parameter C must be non-zero")
        if abs((self.c - 1) / self.c) >= 1:
            warnings.warn(f"derivative filter pole (C-1)/C = {(self.c - 1) / self.c:.3g} is not inside the unit circle",
                          RuntimeWarning, stacklevel=3)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return IpdConfig(**d)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), float(d["alpha"]), float(d["kp"]), float(d["kd"]), float(d["c"]), float(d["ts"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def filtered_derivative_tf(c, ts):
    if c == 0 or not ts > 0:
        raise ValueError("need C != 0 and ts > 0")
    return DiscreteTransferFunction([1.0 / ts, -1.0 / ts], [c, 1.0 - c], ts)


def pd_tf(kp, kd, c, ts):
    """Kp + Kd*D(z) over the common denominator C + (1-C) z^-1."""
    return DiscreteTransferFunction([kp * c + kd / ts, kp * (1 - c) - kd / ts], [c, 1.0 - c], ts)


def _integrator_gain(alpha, ts):
    # 1 / (alpha (1 - z^-1))
    return DiscreteTransferFunction([1.0 / alpha], [1.0, -1.0], ts)


def _derivative_power(c, ts, n):
    d = filtered_derivative_tf(c, ts)
    return d if n == 1 else series(d, d)


def ipd_compensator_tf(cfg):
    """Error-feedback equivalent of the iPD: (PD(z) + D^n(z)) / (alpha (1 - z^-1))."""
    kp, kd, c, ts = cfg.kp, cfg.kd, cfg.c, cfg.ts
    if cfg.n == 1:
        # Kp + (Kd + 1) D(z) shares D's denominator
        comp = pd_tf(kp, kd + 1.0, c, ts)
    else:
        delta = np.array([c, 1.0 - c])
        diff = np.array([1.0, -1.0]) / ts
        num = np.convolve(kp * delta + kd * diff, delta)
        num = num + np.convolve(diff, diff)
        comp = DiscreteTransferFunction(num, np.convolve(delta, delta), ts)
    return series(comp, _integrator_gain(cfg.alpha, ts))


def ipd_open_loop_tf(g, cfg):
    """Loop transfer function iPD(z) * G(z) seen by the tracking error."""
    return series(ipd_compensator_tf(cfg), g)


def closed_loop_tf(g, cfg):
    """Reference-to-output (servo, with feedforward) or regulatory complementary sensitivity."""
    return feedback(ipd_open_loop_tf(g, cfg))


def inner_loop_tf(g, alpha, c, ts, n=1):
    """Inner loop formed by 1/alpha, the integrator, the plant and D^n in the feedback path."""
    direct = series(_integrator_gain(alpha, ts), g)
    return feedback(direct, _derivative_power(c, ts, n))


class _DerivativeChain:
    """n cascaded first-order sections of D(z)."""

    def __init__(self, c, ts, order):
        self.c = c
        self.ts = ts
        self.x_prev = [0.0] * order
        self.v_prev = [0.0] * order

    def __call__(self, x):
        c, ts = self.c, self.ts
        for i in range(len(self.x_prev)):
            v = ((x - self.x_prev[i]) / ts - (1.0 - c) * self.v_prev[i]) / c
            self.x_prev[i] = x
            self.v_prev[i] = v
            x = v
        return x

    def reset(self):
        self.x_prev = [0.0] * len(self.x_prev)
        self.v_prev = [0.0] * len(self.v_prev)


@dataclass
class ControllerState:
    """Runtime memory of one iPD controller. Not thread-safe; one owner per instance."""

    n: int
    c: float
    ts: float
    f_hat: float = 0.0
    u_prev: float = 0.0
    chains: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.chains:
            self.chains = {
                "y": _DerivativeChain(self.c, self.ts, self.n),
                "y_ref": _DerivativeChain(self.c, self.ts, self.n),
                "e": _DerivativeChain(self.c, self.ts, 1),
            }

    @classmethod
    def for_config(cls, cfg):
        return cls(cfg.n, cfg.c, cfg.ts)

    @property
    def deriv_filter_states(self):
        return {k: (list(ch.x_prev), list(ch.v_prev)) for k, ch in self.chains.items()}

    def reset(self):
        self.f_hat = 0.0
        self.u_prev = 0.0
        for ch in self.chains.values():
            ch.reset()


def ipd_step(state, cfg, y_meas, y_ref, servo=True):
    """Advance the controller one sample and return u(k).

    The y_r^(n) feedforward uses the same filtered derivative as the output and
    is only added when ``servo`` is set. ``state.u_prev`` is set to the returned
    value; callers that saturate must overwrite it with the applied action.
    """
    yn = state.chains["y"](y_meas)
    ref_n = state.chains["y_ref"](y_ref)
    e = y_ref - y_meas
    e_dot = state.chains["e"](e)
    f_hat = yn - cfg.alpha * state.u_prev
    ff = ref_n if servo else 0.0
    u = (-f_hat + ff + cfg.kp * e + cfg.kd * e_dot) / cfg.alpha
    state.f_hat = f_hat
    state.u_prev = u
    return u


class IpdController:
    """Convenience wrapper bundling a config with its state."""

    def __init__(self, cfg: IpdConfig, servo: bool = True):
        self.cfg = cfg
        self.servo = servo
        self.state = ControllerState.for_config(cfg)

    def __call__(self, y_meas, y_ref):
        return ipd_step(self.state, self.cfg, y_meas, y_ref, self.servo)

    def applied(self, u):
        """Tell the estimator which action actually reached the plant."""
        self.state.u_prev = u

    def reset(self):
        self.state.reset()
