"""Reduced-scale health checks bundled into a machine-readable report.

Each check returns a :class:`CheckResult` with the statistic it measured,
the threshold it was held to and whether it passed. Failures are report
entries, never exceptions.
"""

import math
import platform
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import __version__, _backend
from .coulomb import InverseTemperature, cyclic_gaps
from .curves import CurveSpec, build_arclength_curve
from .errors import CurvegasError

REPORT_SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class DiagnosticsReport:
    checks: list
    environment: dict
    schema_version: int = REPORT_SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def to_json_dict(self):
        return {"schema_version": self.schema_version, "environment": self.environment,
                "all_passed": self.all_passed, "checks": [asdict(c) for c in self.checks]}


def _circle():
    return build_arclength_curve(CurveSpec.circle(1.0))


def check_drift_closed_form(seed, n_configs=200, beta=2.0):
    from .coulomb import drift

    c = _circle()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        N = int(rng.integers(2, 9))
        x = np.sort(rng.uniform(0, 2 * np.pi, N))
        d = x[:, None] - x[None, :]
        with np.errstate(divide="ignore"):
            cot = np.where(np.eye(N, dtype=bool), 0.0, 0.5 / np.tan(0.5 * d))
        err = np.abs(drift(c, x, beta) - 0.5 * beta * cot.sum(axis=1))
        # near-collisions make the summands large; allow a few of their ulps
        tol = 1e-12 + 8.0 * np.spacing(0.5 * beta * np.abs(cot).sum(axis=1))
        worst = max(worst, float((err / tol).max()))
    return CheckResult("circle_drift_closed_form", worst, 1.0, worst <= 1.0,
                       f"{n_configs} random configurations, N in 2..8; error over "
                       "1e-12 + 8 ulp of the summands")


def check_fekete_circle(seed, Ns=(3, 4)):
    from .fekete import gradient_flow

    c = _circle()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for N in Ns:
        x = np.sort(rng.uniform(0, 2 * np.pi, N))
        res = gradient_flow(c, x, tol=1e-11)
        worst = max(worst, abs(res.discriminant / N ** N - 1.0))
    return CheckResult("fekete_circle_discriminant", worst, 1e-6, worst <= 1e-6,
                       f"relative error of Delta_N against N^N for N in {list(Ns)}")


def check_capacity(seed):
    from .fekete import extrapolate_capacity, transfinite_diameter

    circ = transfinite_diameter(_circle(), [4, 8, 16])
    err_c = max(abs(v - N ** (1.0 / (N - 1))) for N, v, _ in circ)
    ell = build_arclength_curve(CurveSpec.ellipse(2.0, 1.0))
    fit = extrapolate_capacity(transfinite_diameter(ell, [8, 16, 32, 64], tol=1e-8))
    rel = abs(fit["capacity"] / 1.5 - 1.0)
    ok = err_c <= 1e-6 and rel <= 0.05
    return CheckResult("capacity_extrapolation", rel, 0.05, ok,
                       f"ellipse(2,1) extrapolated {fit['capacity']:.6f} vs 1.5; "
                       f"circle max abs error {err_c:.2e}")


def check_stationarity(seed, corrupt_drift=False, n_samples=20000):
    from .gibbs import GapBump, sample_stationary, stationarity_residual

    c = _circle()
    batch = sample_stationary(c, 2.0, 2, n_samples, burn_in=300, thin=2, seed=seed, n_chains=4)
    sign = -1.0 if corrupt_drift else 1.0
    worst = 0.0
    for center, width in ((2.5, 0.8), (3.0, 1.0), (3.8, 1.3)):
        est, se = stationarity_residual(batch, GapBump([center], [width]), drift_sign=sign)
        worst = max(worst, abs(est) / se)
    detail = "circle, beta=2, N=2, 3 gap bumps"
    if corrupt_drift:
        detail += "; drift sign flipped by test hook"
    return CheckResult("stationary_fpk_residual", worst, 3.0, worst <= 3.0, detail)


def check_sde_vs_mcmc(seed, N=4, M=300, t_end=5.0):
    from .gibbs import sample_stationary
    from .sde import SimulationConfig, simulate_ensemble

    c = _circle()
    l = c.length
    ref = sample_stationary(c, 2.0, N, 10000, burn_in=300, thin=4, seed=seed, n_chains=4)
    ref_gaps = cyclic_gaps(ref.samples, l).ravel()
    x0 = np.linspace(0.0, 0.5, N)
    cfg = SimulationConfig(c, InverseTemperature.from_beta(2.0), 0.01, t_end, x0, seed=seed)
    _, states, _ = simulate_ensemble(cfg, np.repeat(x0[None, :], M, axis=0),
                                     np.array([0, cfg.n_steps]))
    ks0 = stats.ks_2samp(cyclic_gaps(states[0], l).ravel(), ref_gaps).statistic
    ks1 = stats.ks_2samp(cyclic_gaps(states[1], l).ravel(), ref_gaps).statistic
    ok = bool(ks1 <= 0.1 and ks1 < ks0)
    return CheckResult("sde_stationary_agreement", float(ks1), 0.1, ok,
                       f"pooled-gap KS at t=0: {ks0:.3f}, at t={t_end:g}: {ks1:.3f}")


def check_kolmogorov(seed, h=1e-3, n_draws=40000):
    from .coulomb import drift
    from .sde import SimulationConfig, kolmogorov_moments

    c = _circle()
    x = np.array([0.0, 0.5 * np.pi])
    cfg = SimulationConfig(c, InverseTemperature.from_beta(2.0), h, h, x, seed=seed)
    mom = kolmogorov_moments(cfg, x, h, n_draws, substeps=4)
    z_mean = np.abs(mom["mean"] - drift(c, x, 2.0)) / mom["mean_se"]
    z_var = np.abs(mom["var"] - 1.0) / mom["var_se"]
    worst = float(max(z_mean.max(), z_var.max()))
    return CheckResult("kolmogorov_short_time", worst, 3.0, worst <= 3.0,
                       f"h={h:g}, {n_draws} draws, max z-score of drift and variance")


def check_rate_zero(seed):
    from .fekete import flow_path
    from .functionals import DiscretePath, rate_I, rate_J

    c = _circle()
    x0 = np.array([0.0, 1.0, 2.5])
    path = flow_path(c, x0, 1e-3, 1000)
    I = rate_I(c, path)
    J = rate_J(c, DiscretePath(path.times, c.point(path.states), kind="curve"))
    rel = abs(J - I) / max(I, 1e-300)
    return CheckResult("rate_zero_on_flow", I, 1e-4, I <= 1e-4 and rel <= 1e-6,
                       f"rate_I={I:.3e}, |rate_J - rate_I|/rate_I={rel:.1e}")


def check_hydro(seed):
    from .functionals import CurveTestFunction, hydro_residual

    c = _circle()
    z = np.exp(2j * np.pi * np.arange(1024) / 1024)
    worst = 0.0
    for expr in ("x**3 - 2*x*y", "y**4 + x", "x*x*y - 3*y"):
        worst = max(worst, abs(hydro_residual(c, CurveTestFunction(expr), z)))
    return CheckResult("hydro_equilibrium_residual", worst, 1e-6, worst <= 1e-6,
                       "uniform measure on 1024 circle points, 3 polynomials")


def check_reproducibility(seed):
    from .gibbs import sample_stationary
    from .sde import SimulationConfig, simulate

    c = _circle()
    x0 = np.linspace(0.0, 5.0, 4)
    cfg = SimulationConfig(c, InverseTemperature.from_beta(2.0), 0.01, 2.0, x0, seed=seed)
    a, b = simulate(cfg), simulate(cfg)
    s1 = sample_stationary(c, 2.0, 3, 500, burn_in=50, seed=seed)
    s2 = sample_stationary(c, 2.0, 3, 500, burn_in=50, seed=seed)
    same = (np.array_equal(a.states, b.states) and np.array_equal(s1.samples, s2.samples))
    return CheckResult("reproducibility", 0.0 if same else 1.0, 0.0, same,
                       "repeated simulate and sample_stationary are bit-identical")


CHECKS = (check_drift_closed_form, check_fekete_circle, check_capacity, check_stationarity,
          check_sde_vs_mcmc, check_kolmogorov, check_rate_zero, check_hydro,
          check_reproducibility)


def diagnose(seed=0, corrupt_drift=False, checks=None):
    """Run the reduced-scale checks and collect a :class:`DiagnosticsReport`.

    ``corrupt_drift`` is a test hook that flips the drift sign inside the
    stationarity check; that check must then fail.
    """
    results = []
    for k, fn in enumerate(checks or CHECKS):
        s = int(seed) + 101 * k
        try:
            if fn is check_stationarity:
                res = fn(s, corrupt_drift=corrupt_drift)
            else:
                res = fn(s)
        except CurvegasError as exc:
            res = CheckResult(fn.__name__.replace("check_", ""), math.nan, math.nan, False,
                              f"{type(exc).__name__}: {exc}")
        res.statistic, res.passed = float(res.statistic), bool(res.passed)
        results.append(res)
    env = {"package_version": __version__, "backend": _backend.BACKEND, "seed": int(seed),
           "numpy": np.__version__, "python": platform.python_version()}
    return DiagnosticsReport(results, env)
