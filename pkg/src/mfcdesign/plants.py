"""Worked plants: cart-pendulum angle and identified vehicle longitudinal dynamics."""

from __future__ import annotations

from dataclasses import dataclass

from .ipd import IpdConfig, closed_loop_tf, inner_loop_tf
from .tf import ContinuousSecondOrder, DiscreteTransferFunction, discretize, series

VEHICLE_TS = 0.05
VEHICLE_NUM = (0.0, 0.01262, -0.01236)
VEHICLE_DEN = (1.0, -2.957, 2.915, -0.9581)

PENDULUM_TS = 0.01


@dataclass(frozen=True)
class PendulumParams:
    cart_mass: float = 0.1
    pend_mass: float = 0.5
    length: float = 0.5
    friction: float = 2.0
    gravity: float = 9.8
    inertia: float | None = None  # defaults to m*l^2

    def __post_init__(self):
        if self.inertia is None:
            object.__setattr__(self, "inertia", self.pend_mass * self.length ** 2)
        for name in ("cart_mass", "pend_mass", "length", "friction", "gravity", "inertia"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def pendulum_continuous(p=PendulumParams()):
    """Linearised angle dynamics, force on the cart as input."""
    M, m, l = p.cart_mass, p.pend_mass, p.length
    return ContinuousSecondOrder(
        a2=p.inertia + m * l ** 2 + m ** 2 * l ** 2 / (M + m),
        a1=p.friction,
        a0=-m * p.gravity * l,
        k=m * l / (M + m),
    )


def pendulum_discrete(p=PendulumParams(), ts=PENDULUM_TS, method="zoh"):
    return discretize(pendulum_continuous(p), ts, method)


def vehicle_tf():
    """Pedal (in [-1, 1]) to speed (m/s), Ts = 0.05 s."""
    return DiscreteTransferFunction(VEHICLE_NUM, VEHICLE_DEN, VEHICLE_TS)


def backward_difference(ts):
    return DiscreteTransferFunction([1.0 / ts, -1.0 / ts], [1.0], ts)


def integrator(ts):
    """Ts / (1 - z^-1), the inverse of the backward difference."""
    return DiscreteTransferFunction([ts], [1.0, -1.0], ts)


def vehicle_inner_plant(g=None):
    """Pedal to acceleration: G(z) (1 - z^-1) / Ts."""
    g = vehicle_tf() if g is None else g
    return series(g, backward_difference(g.ts))


def vehicle_outer_plant(inner_cfg: IpdConfig, g=None, loop="inner"):
    """Plant seen by the speed controller: inner loop followed by an integrator.

    ``loop="inner"`` uses the alpha/integrator/D^n inner loop of the inner iPD;
    ``loop="closed"`` uses the complete closed acceleration loop including Kp, Kd.
    No pole/zero cancellation is attempted.
    """
    gi = vehicle_inner_plant(g)
    if loop == "inner":
        m = inner_loop_tf(gi, inner_cfg.alpha, inner_cfg.c, inner_cfg.ts, inner_cfg.n)
    elif loop == "closed":
        m = closed_loop_tf(gi, inner_cfg)
    else:
        raise ValueError(f"unknown loop kind {loop!r}")
    return series(m, integrator(gi.ts))


# Controller settings quoted for the two case studies.
PENDULUM_DESIGNED = IpdConfig(n=1, alpha=170.06, kp=48.98, kd=64.92, c=4.0, ts=PENDULUM_TS)
PENDULUM_ITERATIVE = IpdConfig(n=1, alpha=154.94, kp=48.56, kd=71.05, c=4.0, ts=PENDULUM_TS)

VEHICLE_FREQ_OUTER = IpdConfig(n=1, alpha=158644.0, kp=3.0, kd=3000.0, c=3.5, ts=VEHICLE_TS)
VEHICLE_FREQ_INNER = IpdConfig(n=1, alpha=1475.05, kp=20.0, kd=0.0, c=7.5, ts=VEHICLE_TS)
VEHICLE_ITER_OUTER = IpdConfig(n=1, alpha=330.0, kp=1e-4, kd=3.655, c=2.5, ts=VEHICLE_TS)
VEHICLE_ITER_INNER = IpdConfig(n=1, alpha=2063.0, kp=28.13, kd=0.0, c=9.6, ts=VEHICLE_TS)

PRESETS = {
    "pendulum": pendulum_discrete,
    "vehicle": vehicle_tf,
    "vehicle-inner": vehicle_inner_plant,
    "vehicle-outer": lambda: vehicle_outer_plant(VEHICLE_FREQ_INNER),
}


def preset(name, ts=None):
    """Named plant; ``unity`` is a static gain of one at sample time ``ts``."""
    if name == "unity":
        return DiscreteTransferFunction([1.0], [1.0], ts if ts is not None else 0.01)
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown plant preset {name!r}; choose from {sorted(PRESETS) + ['unity']}") from None
