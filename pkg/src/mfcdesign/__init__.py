"""Frequency-based design and simulation of model-free (iPD) controllers."""

from .design import (AlphaBound, ModuleEllipse, PhaseLine, StabilityRegion, alpha_bound, best_config_search,
                     build_region, closed_loop_stable, module_ellipse, phase_crossover, phase_line,
                     simplified_module_bound, simplified_phase_line)
from .ipd import (ControllerState, IpdConfig, IpdController, closed_loop_tf, filtered_derivative_tf,
                  inner_loop_tf, ipd_open_loop_tf, ipd_step, pd_tf)
from .plants import (PendulumParams, pendulum_continuous, pendulum_discrete, vehicle_inner_plant,
                     vehicle_outer_plant, vehicle_tf)
from .sim import CascadeSpec, Metrics, SimTrace, compute_metrics, simulate_cascade, simulate_loop
from .tf import (ContinuousSecondOrder, DiscreteTransferFunction, FrequencyGrid, discretize_tustin,
                 discretize_zoh, eval_freq, feedback, is_stable, poles, series)

__version__ = "0.1.0"
