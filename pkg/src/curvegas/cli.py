"""Command-line entry point.

Every run is described by one JSON config file::

    {"command": "simulate",
     "curve": {"kind": "circle", "radius": 1.0},
     "params": {"N": 8, "beta": 2.0, "dt": 0.01, "t_end": 1.0},
     "output_dir": "out", "seed": 1, "format": "csv"}

Flags override the file. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from ._parallel import resolve_threads
from .coulomb import InverseTemperature
from .curves import CurveSpec, build_arclength_curve
from .errors import ConfigError, CurvegasError, InvalidCurve

COMMANDS = ("simulate", "sample", "fekete", "capacity", "rate", "hydro", "diagnose")
FORMATS = ("csv", "json")
DEFAULT_TEST_FUNCTIONS = ("x", "x*y", "x**3 - 3*x*y**2", "x**2*y + y**3 - y", "x**4 - y**2 + x")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@dataclass
class ExperimentConfig:
    command: str
    curve: CurveSpec
    params: dict = field(default_factory=dict)
    output_dir: Path = Path("curvegas-out")
    seed: int = 0
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be a JSON object")
        try:
            self.seed = int(self.seed)
        except (TypeError, ValueError):
            raise ConfigError(
                f"seed must be an unsigned 64-bit integer, got {self.seed!r}") from None
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        self.output_dir = Path(self.output_dir)

    def param(self, name, default=None, kind=float, positive=False, required=False):
        """Typed lookup of ``params[name]``; errors name the field."""
        if name not in self.params:
            if required:
                raise ConfigError(f"params.{name} is required for {self.command}")
            return default
        value = self.params[name]
        try:
            value = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"params.{name} must be {kind.__name__}, got {value!r}") from None
        if positive and not value > 0:
            raise ConfigError(f"params.{name} must be positive, got {value!r}")
        return value


def load_config(path=None, command=None, seed=None, output=None, fmt=None):
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if command and data.get("command", command) != command:
        raise ConfigError(f"command {command!r} conflicts with config command "
                          f"{data['command']!r}")
    command = command or data.get("command")
    if command is None:
        raise ConfigError("command is required (positional argument or config field)")
    curve = data.get("curve", {"kind": "circle", "radius": 1.0})
    if not isinstance(curve, dict):
        raise ConfigError("curve must be a JSON object")
    return ExperimentConfig(
        command=command,
        curve=CurveSpec.from_dict(curve),
        params=data.get("params", {}),
        output_dir=output if output is not None else data.get("output_dir", "curvegas-out"),
        seed=seed if seed is not None else data.get("seed", 0),
        format=fmt if fmt is not None else data.get("format", "json"),
    )


# ---------------------------------------------------------------- commands

def _curve(cfg):
    return build_arclength_curve(cfg.curve, tol=cfg.param("curve_tol", 1e-12, positive=True))


def _initial(cfg, curve, default="equidistant"):
    init = cfg.params.get("initial", default)
    l = curve.length
    if isinstance(init, list):
        return np.array(init, dtype=np.float64)
    N = cfg.param("N", kind=int, required=True)
    if N < 1:
        raise ConfigError(f"params.N must be >= 1, got {N}")
    if init == "equidistant":
        return l * np.arange(N) / N
    if init == "random":
        rng = np.random.default_rng([cfg.seed, 0x1417])
        return np.sort(rng.uniform(0.0, l, N))
    raise ConfigError(f"params.initial must be a list, 'equidistant' or 'random', got {init!r}")


def _temperature(cfg):
    if "kappa" in cfg.params:
        if "beta" in cfg.params:
            raise ConfigError("give either params.beta or params.kappa, not both")
        return InverseTemperature.from_kappa(cfg.param("kappa")), "kappa_form"
    return InverseTemperature.from_beta(cfg.param("beta", 2.0, positive=True)), "beta_form"


def cmd_simulate(cfg, threads):
    from .sde import SimulationConfig, simulate

    curve = _curve(cfg)
    temp, mode = _temperature(cfg)
    sim = SimulationConfig(
        curve, temp, cfg.param("dt", 0.01, positive=True), cfg.param("t_end", 1.0, positive=True),
        _initial(cfg, curve), seed=cfg.seed, mode=cfg.params.get("mode", mode),
        step_policy=cfg.params.get("step_policy", "reject_halve"),
        max_halvings=cfg.param("max_halvings", 30, kind=int),
        n_frames=cfg.param("n_frames", 1000, kind=int, positive=True))
    record = simulate(sim, threads=threads)
    if cfg.format == "json":
        record = record.transplanted(curve)
    return io.write_trajectory(record, cfg.output_dir, cfg.format)


def cmd_sample(cfg, threads):
    from .gibbs import sample_stationary

    curve = _curve(cfg)
    batch = sample_stationary(
        curve, cfg.param("beta", 2.0, positive=True), cfg.param("N", kind=int, required=True),
        cfg.param("n_samples", 1000, kind=int, positive=True),
        burn_in=cfg.param("burn_in", 1000, kind=int), thin=cfg.param("thin", 1, kind=int),
        seed=cfg.seed, n_chains=cfg.param("n_chains", 4, kind=int, positive=True),
        threads=threads)
    return io.write_samples(batch, cfg.output_dir, cfg.format)


def cmd_fekete(cfg, threads):
    from .fekete import gradient_flow

    curve = _curve(cfg)
    res = gradient_flow(curve, _initial(cfg, curve, default="random"),
                        dt=cfg.param("dt", None, positive=True),
                        tol=cfg.param("tol", 1e-10, positive=True),
                        max_iter=cfg.param("max_iter", 100000, kind=int))
    out = {"schema": "curvegas.fekete/1", "curve": cfg.curve.to_dict(), "seed": cfg.seed}
    out.update(res.to_json_dict(curve))
    return [io.write_json(cfg.output_dir / "fekete.json", out)]


def cmd_capacity(cfg, threads):
    from .fekete import extrapolate_capacity, transfinite_diameter

    curve = _curve(cfg)
    N_list = cfg.params.get("N_list", [4, 8, 16, 32])
    if not isinstance(N_list, list):
        raise ConfigError("params.N_list must be a list of integers")
    table = transfinite_diameter(curve, N_list, tol=cfg.param("tol", 1e-9, positive=True))
    rows = [{"N": N, "estimate": est, "energy": res.energy, "iterations": res.iterations}
            for N, est, res in table]
    out = {"schema": "curvegas.capacity/1", "curve": cfg.curve.to_dict(), "table": rows,
           "extrapolation": extrapolate_capacity(table) if len(table) > 1 else None}
    paths = [io.write_json(cfg.output_dir / "capacity.json", out)]
    if cfg.format == "csv":
        paths.append(io.write_csv(cfg.output_dir / "capacity.csv", ["N", "estimate"],
                                  [[r["N"], r["estimate"]] for r in rows]))
    return paths


def cmd_rate(cfg, threads):
    from .fekete import flow_path
    from .functionals import DiscretePath, rate_report

    curve = _curve(cfg)
    if "path_file" in cfg.params:
        header, data = io.read_csv_matrix(cfg.params["path_file"])
        path = DiscretePath(data[:, 0], data[:, 1:], kind="parameter")
    else:
        dt = cfg.param("dt", 1e-3, positive=True)
        n = int(round(cfg.param("t_end", 1.0, positive=True) / dt))
        path = flow_path(curve, _initial(cfg, curve, default="random"), dt, n)
        kind = cfg.params.get("path", "flow")
        if kind == "reversed":
            path = path.reversed()
        elif kind != "flow":
            raise ConfigError(f"params.path must be 'flow' or 'reversed', got {kind!r}")
    which = cfg.params.get("functional", "both")
    if which not in ("I", "J", "both"):
        raise ConfigError(f"params.functional must be I, J or both, got {which!r}")
    rows = []
    if which in ("I", "both"):
        rows.append(rate_report(curve, path, "I"))
    if which in ("J", "both"):
        cpath = DiscretePath(path.times, curve.point(path.states), kind="curve")
        rows.append(rate_report(curve, cpath, "J"))
    return [io.write_json(cfg.output_dir / "rate.json",
                          {"schema": "curvegas.rate/1", "rows": rows})]


def equilibrium_points(spec, n):
    """Equilibrium (harmonic) measure discretized at ``n`` points.

    Available when ``gamma_0`` only has modes ``k <= 1``: then it is the
    boundary value of the exterior conformal map and the measure is the image
    of the uniform measure in ``theta``.
    """
    ks, cs = spec.modes()
    if np.any(ks > 1) or 1 not in ks:
        raise ConfigError("params.measure 'equilibrium' needs a curve whose Fourier modes "
                          "are all <= 1 with a nonzero k=1 mode")
    theta = 2.0 * math.pi * np.arange(n) / n
    return (cs[None, :] * np.exp(1j * np.outer(theta, ks))).sum(axis=1)


def cmd_hydro(cfg, threads):
    from .functionals import CurveTestFunction, hydro_residual

    curve = _curve(cfg)
    n = cfg.param("n_points", 1024, kind=int, positive=True)
    measure = cfg.params.get("measure", "equilibrium")
    weights = None
    if measure == "equilibrium":
        points = equilibrium_points(cfg.curve, n)
    elif measure == "arclength_uniform":
        points = curve.point(curve.length * np.arange(n) / n)
    elif isinstance(measure, dict) and "points" in measure:
        points = np.array([complex(a, b) for a, b in measure["points"]])
        weights = measure.get("weights")
    else:
        raise ConfigError("params.measure must be 'equilibrium', 'arclength_uniform' or "
                          "an object with points (and optional weights)")
    beta = cfg.param("beta", 2.0, positive=True)
    exprs = cfg.params.get("test_functions", list(DEFAULT_TEST_FUNCTIONS))
    rows = [{"functional": "hydro_residual", "test_function": e, "beta": beta,
             "value": hydro_residual(curve, CurveTestFunction(e), points, weights, beta)}
            for e in exprs]
    return [io.write_json(cfg.output_dir / "hydro.json",
                          {"schema": "curvegas.hydro/1", "n_points": len(points), "rows": rows})]


def cmd_diagnose(cfg, threads):
    from .diagnostics import diagnose

    report = diagnose(seed=cfg.seed, corrupt_drift=bool(cfg.params.get("corrupt_drift", False)))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.statistic:.3g} "
              f"(threshold {c.threshold:.3g}) {c.detail}")
    return [io.write_json(cfg.output_dir / "diagnostics.json", report.to_json_dict())]


HANDLERS = {"simulate": cmd_simulate, "sample": cmd_sample, "fekete": cmd_fekete,
            "capacity": cmd_capacity, "rate": cmd_rate, "hydro": cmd_hydro,
            "diagnose": cmd_diagnose}


def run(cfg, threads=None):
    """Execute ``cfg`` and return the list of written artifact paths."""
    threads = resolve_threads(threads)
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir {str(cfg.output_dir)!r} is not writable: "
                          f"{exc.strerror}") from None
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output_dir {str(cfg.output_dir)!r} is not writable")
    return HANDLERS[cfg.command](cfg, threads)


def build_parser():
    p = argparse.ArgumentParser(prog="curvegas",
                                description="Coulomb gases and Dyson-type dynamics on curves.")
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="experiment to run (may also be given in the config)")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
    p.add_argument("--output", type=Path, help="output directory (overrides config)")
    p.add_argument("--format", choices=FORMATS, help="artifact format (overrides config)")
    p.add_argument("--threads", type=int,
                   help="worker threads; defaults to $CURVEGAS_THREADS or 1")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.seed, args.output, args.format)
        paths = run(cfg, args.threads)
    except (ConfigError, InvalidCurve) as exc:
        print(f"curvegas: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CurvegasError as exc:
        print(f"curvegas: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
