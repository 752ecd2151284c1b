"""Euler-Maruyama integration of the parametrization process.

Two equivalent forms are supported::

    beta_form:   dX = dB + (beta/2) S(X) dt
    kappa_form:  dX = sqrt(kappa) dB - grad V(X) dt

with ``S_i(x) = sum_{j != i} Re(gamma'(x_i) / (gamma(x_i) - gamma(x_j)))
= -dV/dx_i``. States are kept in the cylinder ``E`` (``0 <= x_1 < l``).

Steps proposing a configuration outside the ordered chamber are handled by
the step policy: ``reject_halve`` discards the proposal and covers the same
interval with two half steps using fresh noise, recursively up to
``max_halvings`` levels; ``tamed`` additionally divides the drift by
``1 + dt |b|`` before proposing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, _kernels_py
from ._parallel import run_chunks
from .coulomb import Configuration, InverseTemperature, check_ordered, positions_of
from .curves import CurveSpec, build_arclength_curve
from .errors import ConfigError, StepFailure

MODES = ("beta_form", "kappa_form")
POLICIES = {"reject_halve": 0, "tamed": 1}


@dataclass
class SimulationConfig:
    curve: object
    temperature: InverseTemperature
    dt: float
    t_end: float
    initial: np.ndarray
    seed: int = 0
    mode: str = "beta_form"
    step_policy: str = "reject_halve"
    max_halvings: int = 30
    n_frames: int = 1000

    def __post_init__(self):
        self.initial = np.array(positions_of(self.initial), dtype=np.float64).reshape(-1)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.step_policy not in POLICIES:
            raise ConfigError(f"step_policy must be one of {tuple(POLICIES)}, "
                              f"got {self.step_policy!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end!r}")
        if self.dt > self.t_end:
            raise ConfigError("dt must not exceed t_end")
        if self.temperature.beta < 1.0:
            raise ConfigError(
                f"beta = {self.temperature.beta:g} < 1: the parametrization process is only "
                "known to exist (without collisions) for beta >= 1; no reflecting scheme is "
                "implemented")
        if self.max_halvings < 0 or self.n_frames < 1:
            raise ConfigError("max_halvings must be >= 0 and n_frames >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        check_ordered(self.initial, self.curve.length)

    @property
    def n_steps(self):
        # tolerate t_end/dt landing a rounding error above an integer
        return max(1, math.ceil(self.t_end / self.dt * (1.0 - 1e-12)))

    @property
    def coefficients(self):
        """``(drift_coef, noise_coef)`` multiplying ``S(X) dt`` and ``dB``."""
        if self.mode == "beta_form":
            return 0.5 * self.temperature.beta, 1.0
        return 1.0, math.sqrt(self.temperature.kappa)

    def record_steps(self, n_frames=None):
        n = self.n_steps
        every = max(1, math.ceil(n / (n_frames or self.n_frames)))
        steps = np.arange(0, n + 1, every, dtype=np.int64)
        if steps[-1] != n:
            steps = np.append(steps, n)
        return steps

    def summary(self):
        return {
            "curve": self.curve.spec.to_dict(),
            "beta": self.temperature.beta,
            "kappa": self.temperature.kappa,
            "mode": self.mode,
            "dt": self.dt,
            "t_end": self.t_end,
            "seed": int(self.seed),
            "initial": [float(v) for v in self.initial],
            "step_policy": self.step_policy,
            "max_halvings": self.max_halvings,
            "n_frames": self.n_frames,
            "n_steps": self.n_steps,
            "backend": _backend.BACKEND,
        }

    @classmethod
    def from_summary(cls, meta, curve=None):
        curve = curve or build_arclength_curve(CurveSpec.from_dict(meta["curve"]))
        if meta["mode"] == "kappa_form":
            temp = InverseTemperature.from_kappa(meta["kappa"])
        else:
            temp = InverseTemperature.from_beta(meta["beta"])
        return cls(curve, temp, meta["dt"], meta["t_end"], np.array(meta["initial"]),
                   seed=meta["seed"], mode=meta["mode"], step_policy=meta["step_policy"],
                   max_halvings=meta["max_halvings"], n_frames=meta["n_frames"])


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)
    curve_points: np.ndarray = None

    def transplanted(self, curve):
        """Copy with ``curve_points`` filled in."""
        return TrajectoryRecord(self.times, self.states, dict(self.meta),
                                curve.point(self.states))

    def csv_header(self):
        return ["t"] + [f"x{i + 1}" for i in range(self.states.shape[1])]

    def to_json_dict(self):
        out = {"schema": "curvegas.trajectory/1", "meta": self.meta,
               "times": self.times.tolist(), "states": self.states.tolist()}
        if self.curve_points is not None:
            out["curve_points"] = [[[z.real, z.imag] for z in row] for row in self.curve_points]
        return out

    @classmethod
    def from_json_dict(cls, d):
        pts = d.get("curve_points")
        if pts is not None:
            pts = np.array([[complex(a, b) for a, b in row] for row in pts])
        return cls(np.array(d["times"]), np.array(d["states"]), d["meta"], pts)


def quotient_map(x, length):
    """Shift an ordered configuration by a multiple of ``length`` into ``E``.

    The shift is ``x_1 - (x_1 mod length)`` with the floor-remainder, so the
    result differs from ``x`` by an integer multiple of ``length * (1,...,1)``.
    """
    x = np.array(positions_of(x), dtype=np.float64).reshape(-1)
    check_ordered(x, length)
    y = _backend.kernels.quotient_rows(x[None, :], length)[0]
    return Configuration(y, length)


def transplant(curve, config):
    """Curve points ``(gamma(x_1), ..., gamma(x_N))``."""
    return curve.point(positions_of(config))


def simulate_ensemble(cfg, initial=None, record_steps=None, stream_offset=0,
                      threads=None, raise_on_failure=True):
    """Integrate ``M`` independent trajectories sharing ``cfg``.

    Parameters
    ----------
    cfg : SimulationConfig
    initial : array, shape (M, N), optional
        Starting configurations; defaults to ``cfg.initial`` as one row.
    record_steps : array of int, optional
        Step indices to record (must be increasing; last entry is the number
        of steps). Defaults to ``cfg.record_steps()``.
    stream_offset : int
        Trajectory ``m`` draws noise from stream ``stream_offset + m``; results
        do not depend on ``threads``.

    Returns
    -------
    times : ndarray, shape (R,)
    states : ndarray, shape (R, M, N)
    failures : dict with ``fail_step`` and ``fail_gap`` arrays
    """
    X0 = np.atleast_2d(cfg.initial if initial is None else np.asarray(initial, dtype=float))
    for row in X0:
        check_ordered(row, cfg.curve.length)
    steps = cfg.record_steps() if record_steps is None else np.asarray(record_steps, np.int64)
    coef, noise = cfg.coefficients
    policy = POLICIES[cfg.step_policy]
    kern = _backend.kernels

    def work(a, b):
        return kern.em_run(X0[a:b], coef, noise, cfg.dt, steps, int(cfg.seed),
                           stream_offset + a, policy, cfg.max_halvings, cfg.curve.kernel)

    parts = run_chunks(work, X0.shape[0], threads)
    states = np.concatenate([p[0] for p in parts], axis=1)
    fail_step = np.concatenate([p[1] for p in parts])
    fail_gap = np.concatenate([p[2] for p in parts])
    if raise_on_failure and np.any(fail_step >= 0):
        m = int(np.argmax(fail_step >= 0))
        t = float(fail_step[m] * cfg.dt)
        raise StepFailure(
            f"trajectory {m}: no admissible step after {cfg.max_halvings} halvings at "
            f"t = {t:g} (offending gap {fail_gap[m]:.3g}); reduce dt",
            gap=float(fail_gap[m]), time=t, trajectory=m)
    return steps * cfg.dt, states, {"fail_step": fail_step, "fail_gap": fail_gap}


def simulate(cfg, threads=None):
    """Single trajectory from ``cfg.initial``; deterministic given ``cfg.seed``."""
    times, states, _ = simulate_ensemble(cfg, threads=threads)
    return TrajectoryRecord(times, states[:, 0, :], cfg.summary())


def step(state, cfg, step_index=1, trajectory=0):
    """One Euler-Maruyama step of length ``cfg.dt`` from ``state``.

    The noise is keyed by ``(cfg.seed, trajectory, step_index)``, so the
    call reproduces step ``step_index`` of ``simulate``.
    """
    x = positions_of(state)
    check_ordered(x, cfg.curve.length)
    coef, noise = cfg.coefficients
    y, gap = _kernels_py._advance_one(
        np.array(x, dtype=np.float64), coef, noise, cfg.dt, 0, 1, POLICIES[cfg.step_policy],
        cfg.max_halvings, cfg.curve.kernel, int(cfg.seed), int(trajectory), int(step_index))
    if y is None:
        raise StepFailure(f"no admissible step after {cfg.max_halvings} halvings "
                          f"(offending gap {gap:.3g}); reduce dt", gap=float(gap),
                          trajectory=trajectory)
    y = _backend.kernels.quotient_rows(y[None, :], cfg.curve.length)[0]
    return Configuration(y, cfg.curve.length)


def kolmogorov_moments(cfg, x, h, n_samples, substeps=8, stream_offset=0, threads=None):
    """Monte Carlo short-time moments of ``X(h) - x``.

    Runs ``n_samples`` trajectories from ``x`` over ``[0, h]`` using
    ``substeps`` Euler steps. The increment is measured in the unwrapped
    chamber ``D`` (the quotient shift is undone).

    Returns
    -------
    dict with ``mean`` (of ``(X(h)-x)/h``), ``mean_se``, ``var`` (per-coordinate
    variance divided by ``h``) and ``var_se``.
    """
    x = np.asarray(x, dtype=float)
    sub = SimulationConfig(cfg.curve, cfg.temperature, h / substeps, h, x, seed=cfg.seed,
                           mode=cfg.mode, step_policy=cfg.step_policy,
                           max_halvings=cfg.max_halvings)
    X0 = np.repeat(x[None, :], n_samples, axis=0)
    steps = np.array([substeps], dtype=np.int64)
    _, states, _ = simulate_ensemble(sub, X0, steps, stream_offset, threads)
    inc = states[-1] - x
    l = cfg.curve.length
    inc -= l * np.round(inc[:, :1] / l)
    mean = inc.mean(axis=0) / h
    mean_se = inc.std(axis=0, ddof=1) / h / math.sqrt(n_samples)
    centered = inc - inc.mean(axis=0)
    var = (centered ** 2).mean(axis=0) / h
    var_se = np.sqrt(((centered ** 2 / h - var) ** 2).mean(axis=0) / n_samples)
    return {"mean": mean, "mean_se": mean_se, "var": var, "var_se": var_se}
