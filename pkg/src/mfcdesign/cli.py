"""Command-line entry point: ``mfcdesign <command> [options]``.

Settings are layered as command-line flags over a ``--config`` JSON file over
built-in defaults. ``MFC_GRID_POINTS`` replaces the default frequency-grid
density. Exit codes: 2 plant or config loading, 3 numerical failure,
4 invalid parameters.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import export, plants
from .design import RULES, alpha_bound, build_region
from .ipd import IpdConfig
from .sim import (CascadeSpec, SimTrace, compute_metrics, simulate_cascade, simulate_loop, speed_profile,
                  step_reference)
from .tf import ContinuousSecondOrder, DiscreteTransferFunction, FrequencyGrid, discretize

EXIT_LOAD = 2
EXIT_NUMERIC = 3
EXIT_PARAM = 4

DEFAULTS = {
    "plant": "pendulum",
    "n": 1,
    "c": 1.0,
    "margin": 10.0,
    "rule": None,
    "ts": None,
    "method": "zoh",
    "omega_min": None,
    "points": 4096,
    "alpha": None,
    "kp": None,
    "kd": None,
    "kp_range": None,
    "kd_range": None,
    "resolution": 101,
    "reference": "step",
    "amplitude": 1.0,
    "horizon": 10.0,
    "seed": 0,
    "u_limits": None,
    "servo": True,
    "cascade": None,
    "out": None,
    "out_dir": ".",
}

CASCADES = {
    "table1-freq": (plants.VEHICLE_FREQ_OUTER, plants.VEHICLE_FREQ_INNER),
    "table1-iter": (plants.VEHICLE_ITER_OUTER, plants.VEHICLE_ITER_INNER),
}


class LoadError(Exception):
    """Plant or configuration file could not be read."""


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None


def resolve(command, flags, config_path=None, env=None):
    """Merge flags over the config file over defaults (and MFC_GRID_POINTS over the default)."""
    env = os.environ if env is None else env
    values = dict(DEFAULTS)
    if "MFC_GRID_POINTS" in env:
        try:
            values["points"] = int(env["MFC_GRID_POINTS"])
        except ValueError:
            raise LoadError(f"MFC_GRID_POINTS must be an integer, got {env['MFC_GRID_POINTS']!r}") from None
    if config_path is not None:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"cannot read config file {config_path}: {exc}") from None
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise LoadError(f"unknown keys in {config_path}: {sorted(unknown)}")
        values.update(data)
    values.update({k: v for k, v in flags.items() if v is not None})
    if values["rule"] is None:
        values["rule"] = "upper-first" if int(values["n"]) == 1 else "upper-second"
    if int(values["points"]) < 2:
        raise ValueError("grid needs at least two points")
    return RunConfig(command, values)


def load_plant(source, ts=None, method="zoh"):
    """Preset name or JSON file: {"num", "den", "ts"} or {"a2", "a1", "a0", "k"} (needs ts)."""
    if source in plants.PRESETS or source == "unity":
        if source == "pendulum":
            return plants.pendulum_discrete(ts=ts or plants.PENDULUM_TS, method=method)
        g = plants.preset(source, ts)
        if ts is not None and ts != g.ts:
            raise LoadError(f"preset {source!r} is fixed at ts={g.ts}, got --ts {ts}")
        return g
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise LoadError(f"plant {source!r} is neither a preset nor an existing file "
                        f"(presets: {sorted(plants.PRESETS) + ['unity']})") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read plant file {source}: {exc}") from None
    try:
        if "num" in data:
            g = DiscreteTransferFunction.from_dict(data)
            if ts is not None and ts != g.ts:
                raise LoadError(f"plant file {source} has ts={g.ts}, got --ts {ts}")
            return g
        sys_c = ContinuousSecondOrder(float(data["a2"]), float(data["a1"]), float(data["a0"]), float(data["k"]))
        t = ts if ts is not None else data.get("ts")
        if t is None:
            raise LoadError(f"continuous plant in {source} needs a sample time")
        return discretize(sys_c, float(t), data.get("method", method))
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"malformed plant file {source}: {exc}") from None


def _grid(cfg, g):
    wmin = cfg.omega_min if cfg.omega_min is not None else 2 * np.pi / (1e4 * g.ts)
    return FrequencyGrid(float(wmin), np.pi / g.ts, int(cfg.points))


def _ipd(cfg, g, default_alpha=None):
    alpha = cfg.alpha if cfg.alpha is not None else default_alpha
    if alpha is None or cfg.kp is None or cfg.kd is None:
        raise ValueError("simulation needs --alpha, --kp and --kd (or a --config file providing them)")
    return IpdConfig(int(cfg.n), float(alpha), float(cfg.kp), float(cfg.kd), float(cfg.c), g.ts)


def _design_alpha(cfg, g):
    b = alpha_bound(g, cfg.c, int(cfg.n), cfg.rule, _grid(cfg, g), cfg.margin)
    return b


def cmd_alpha_bound(cfg):
    g = load_plant(cfg.plant, cfg.ts, cfg.method)
    b = _design_alpha(cfg, g)
    lines = [f"alpha bound   {b.bound:.6g}",
             f"rule          {b.rule}",
             f"grid          [{b.grid.omega_min:.6g}, {b.grid.omega_max:.6g}] rad/s, {b.grid.points} points",
             f"peak at       {b.omega_peak:.6g} rad/s",
             f"design alpha  {b.alpha_design:.6g} (margin {b.margin:g})"]
    files = {}
    if cfg.out:
        files[cfg.out] = export.dumps(b.to_dict())
    return lines, files


def cmd_stability_set(cfg):
    g = load_plant(cfg.plant, cfg.ts, cfg.method)
    alpha = cfg.alpha if cfg.alpha is not None else _design_alpha(cfg, g).alpha_design
    region = build_region(g, float(alpha), float(cfg.c), g.ts, int(cfg.n),
                          None if cfg.kp_range is None else tuple(cfg.kp_range),
                          None if cfg.kd_range is None else tuple(cfg.kd_range),
                          int(cfg.resolution), _grid(cfg, g))
    s = region.summary()
    stem = Path(cfg.out_dir) / (cfg.out or "region")
    files = {
        f"{stem}.csv": export.region_csv(region),
        f"{stem}.json": export.region_json(region),
        f"{stem}.svg": export.region_svg(region, title=f"{cfg.plant}: alpha={alpha:.6g}, C={cfg.c:g}"),
    }
    lines = [f"alpha {alpha:.6g}  C {cfg.c:g}  n {cfg.n}  phase {s['phase_mode']}",
             f"omega0 {s['omega0']}  omega1 {s['omega1']}",
             f"grid points {s['points']}  predicted {s['predicted']}  stable {s['stable']}  "
             f"predicted&stable {s['predicted_and_stable']}  precision {s['precision']:.4f}"]
    lines += [f"note: {f}" for f in s["flags"]]
    return lines, files


def _reference(cfg, ts):
    n = int(round(cfg.horizon / ts)) + 1
    if cfg.reference == "step":
        return step_reference(n, cfg.amplitude), None
    if cfg.reference == "profile":
        return speed_profile(cfg.horizon, ts, cfg.seed, v_max=cfg.amplitude)
    raise ValueError(f"unknown reference {cfg.reference!r} (step or profile)")


def cmd_simulate(cfg):
    g = load_plant(cfg.plant, cfg.ts, cfg.method)
    if cfg.cascade is not None:
        if cfg.cascade not in CASCADES:
            raise ValueError(f"unknown cascade {cfg.cascade!r}; choose from {sorted(CASCADES)}")
        outer, inner = CASCADES[cfg.cascade]
        limits = (-1.0, 1.0) if cfg.u_limits is None else tuple(cfg.u_limits)
        limits = None if limits[0] == "none" else limits
        ref, acc = _reference(cfg, g.ts)
        trace = simulate_cascade(CascadeSpec(outer, inner, g, u_limits=limits), ref, acc)
    else:
        ref, _ = _reference(cfg, g.ts)
        ipd = _ipd(cfg, g, None if cfg.alpha is not None else _design_alpha(cfg, g).alpha_design)
        limits = None if cfg.u_limits in (None, ["none"], ("none",)) else tuple(cfg.u_limits)
        trace = simulate_loop(g, ipd, ref, servo=cfg.servo, u_limits=limits)
    m = compute_metrics(trace) if len(trace) >= 3 else None
    stem = Path(cfg.out_dir) / (cfg.out or "trace")
    files = {f"{stem}.csv": trace.to_csv()}
    if m is not None:
        files[f"{stem}.metrics.json"] = export.dumps(m.to_dict())
    lines = [f"samples {len(trace)}  diverged {trace.diverged}"]
    if m is not None:
        lines.append(f"IAE {m.iae:.6g}  IAUDD {m.iaudd:.6g}  OS {m.os:.6g}")
    return lines, files


def read_trace_csv(path):
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise LoadError(f"cannot read trace {path}: {exc}") from None
    names = data.dtype.names or ()
    if not {"t", "y_ref", "y", "e", "u"} <= set(names):
        raise LoadError(f"trace {path} lacks the t,y_ref,y,e,u columns")
    t = np.atleast_1d(data["t"])
    ts = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return SimTrace(t, np.atleast_1d(data["y_ref"]), np.atleast_1d(data["y"]), np.atleast_1d(data["e"]),
                    np.atleast_1d(data["u"]), ts)


def cmd_metrics(cfg):
    trace = read_trace_csv(cfg.trace)
    m = compute_metrics(trace)
    files = {cfg.out: export.dumps(m.to_dict())} if cfg.out else {}
    return [m.to_json()], files


def cmd_reproduce(cfg):
    from .reproduce import reproduce
    report = reproduce(cfg.case, points=int(cfg.points), resolution=int(cfg.resolution), seed=int(cfg.seed))
    out = Path(cfg.out_dir)
    files = {str(out / name): text for name, text in report.files.items()}
    files[str(out / f"{cfg.case}_report.txt")] = report.text()
    files[str(out / f"{cfg.case}_report.json")] = export.dumps(report.to_dict())
    return report.text().rstrip("\n").split("\n"), files


COMMANDS = {
    "alpha-bound": cmd_alpha_bound,
    "stability-set": cmd_stability_set,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
    "reproduce": cmd_reproduce,
}


def _pair(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return [float(p) for p in parts]


def _limits(text):
    return ["none"] if text == "none" else _pair(text)


def build_parser():
    p = argparse.ArgumentParser(prog="mfcdesign", description="Frequency-based iPD design toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, design=True):
        sp.add_argument("--config", help="JSON file with option values (flags take precedence)")
        sp.add_argument("--plant", help="preset (pendulum, vehicle, vehicle-inner, vehicle-outer, unity) or JSON file")
        sp.add_argument("--ts", type=float, help="sample time (pendulum, unity and continuous JSON plants)")
        sp.add_argument("--method", choices=["zoh", "tustin"], help="discretisation of continuous plants")
        sp.add_argument("--out", help="output file or file stem")
        sp.add_argument("--out-dir", dest="out_dir", help="directory for output files")
        if design:
            sp.add_argument("--n", type=int, choices=[1, 2])
            sp.add_argument("--c", type=float, help="derivative filter parameter C")
            sp.add_argument("--rule", choices=RULES)
            sp.add_argument("--margin", type=float)
            sp.add_argument("--omega-min", dest="omega_min", type=float, help="lower grid frequency (rad/s)")
            sp.add_argument("--points", type=int, help="frequency grid points")
            sp.add_argument("--alpha", type=float)

    sp = sub.add_parser("alpha-bound", help="lower bound on alpha")
    common(sp)

    sp = sub.add_parser("stability-set", help="predicted and verified Kp-Kd region")
    common(sp)
    sp.add_argument("--kp-range", dest="kp_range", type=_pair, metavar="LO,HI")
    sp.add_argument("--kd-range", dest="kd_range", type=_pair, metavar="LO,HI")
    sp.add_argument("--resolution", type=int)

    sp = sub.add_parser("simulate", help="closed-loop or cascade simulation")
    common(sp)
    sp.add_argument("--kp", type=float)
    sp.add_argument("--kd", type=float)
    sp.add_argument("--cascade", help=f"vehicle cascade settings: {', '.join(CASCADES)}")
    sp.add_argument("--reference", choices=["step", "profile"])
    sp.add_argument("--amplitude", type=float, help="step height or profile top speed")
    sp.add_argument("--horizon", type=float, help="seconds")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--u-limits", dest="u_limits", type=_limits, metavar="LO,HI|none")
    sp.add_argument("--regulatory", dest="servo", action="store_const", const=False,
                    help="drop the reference-derivative feedforward")

    sp = sub.add_parser("metrics", help="IAE, IAUDD and OS of a trace CSV")
    sp.add_argument("trace")
    sp.add_argument("--out")

    sp = sub.add_parser("reproduce", help="rerun a worked example and report pass/fail")
    sp.add_argument("case", choices=["pendulum", "vehicle"])
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--points", type=int)
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = vars(args).copy()
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    try:
        cfg = resolve(command, flags, config_path)
        lines, files = COMMANDS[command](cfg)
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAM
    # everything is rendered before the first file is touched
    export.write_bundle(files)
    for line in lines:
        print(line)
    for path in files:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
