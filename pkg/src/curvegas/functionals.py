"""Rate functionals, tangential derivatives and the hydrodynamic residual.

Paths are sampled on uniform time grids. Velocities are forward
differences and the interaction term is evaluated at the midpoint of each
interval, so for a path with ``M`` intervals::

    I = 1/2 sum_k dt |(u_{k+1} - u_k)/dt - S((u_k + u_{k+1})/2)|^2

with ``S_i(u) = sum_{j != i} Re(gamma'(u_i) / (gamma(u_i) - gamma(u_j)))``.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np
import sympy

from . import _backend
from .coulomb import cyclic_gaps
from .errors import ConfigError, DegeneratePath, OffCurvePath, OffCurvePoint


@dataclass
class DiscretePath:
    """States on a uniform time grid ``t_0 < ... < t_M`` with ``M >= 2``.

    ``kind="parameter"`` holds real configurations of shape (M+1, N);
    ``kind="curve"`` holds complex curve points of the same shape.
    """

    times: np.ndarray
    states: np.ndarray
    kind: str = "parameter"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        dtype = np.complex128 if self.kind == "curve" else np.float64
        self.states = np.asarray(self.states, dtype=dtype)
        if self.kind not in ("parameter", "curve"):
            raise ConfigError(f"unknown path kind {self.kind!r}")
        if self.times.ndim != 1 or self.times.size < 3:
            raise DegeneratePath("a path needs at least three time points")
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise DegeneratePath("states must have shape (len(times), N)")
        steps = np.diff(self.times)
        if not np.all(steps > 0) or np.ptp(steps) > 1e-9 * steps.mean():
            raise DegeneratePath("time grid must be uniform and increasing")

    @property
    def dt(self):
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    @property
    def horizon(self):
        return float(self.times[-1] - self.times[0])

    def coarsened(self):
        """Every other grid point (requires an even number of intervals)."""
        return DiscretePath(self.times[::2], self.states[::2], self.kind)

    def reversed(self):
        return DiscretePath(self.times, self.states[::-1], self.kind)


def _unwrap_rows(states, length):
    """Undo per-step shifts by multiples of ``length * (1, ..., 1)``."""
    jumps = np.round(np.diff(states[:, 0]) / length)
    shift = np.concatenate([[0.0], np.cumsum(jumps)]) * length
    return states - shift[:, None]


def _check_path_states(states, length):
    g = cyclic_gaps(states, length)
    if not np.all(g > 0.0):
        bad = int(np.argmax(~np.all(g > 0.0, axis=1)))
        raise DegeneratePath(f"state {bad} violates the strict cyclic ordering")


def _rate_integrand(v, S):
    return ((v - S) ** 2).sum(axis=1)


def rate_I(curve, path):
    """Rate functional in parametrization space on the recorded horizon.

    Returns
    -------
    float
        ``1/2 sum_k dt |v_k - S(m_k)|^2`` with forward-difference velocities
        ``v_k`` and midpoints ``m_k``; nonnegative.
    """
    if path.kind != "parameter":
        raise ConfigError("rate_I expects a path of configurations")
    l = curve.length
    u = _unwrap_rows(path.states, l)
    _check_path_states(u, l)
    dt = path.dt
    mid = 0.5 * (u[1:] + u[:-1])
    _check_path_states(mid, l)
    v = np.diff(u, axis=0) / dt
    S = _backend.kernels.drift_batch(mid, 1.0, curve.kernel)
    return float(0.5 * dt * _rate_integrand(v, S).sum())


def lift_path(curve, path, tol=1e-8):
    """Arc-length coordinates of a curve path, continuous in time.

    Raises
    ------
    OffCurvePath
        If a point is farther than ``tol`` from the curve.
    """
    l = curve.length
    W = path.states
    try:
        s = curve.locate(W.reshape(-1), tol=tol).reshape(W.shape)
    except OffCurvePoint as exc:
        raise OffCurvePath(f"path leaves the curve: {exc}") from None
    # ordered representative of each state, then remove wraps in time
    s[:, 1:] = s[:, :1] + np.mod(s[:, 1:] - s[:, :1], l)
    s = _unwrap_rows(s, l)
    _check_path_states(s, l)
    return DiscretePath(path.times, s, kind="parameter")


def rate_J(curve, path, tol=1e-8):
    """Rate functional in curve space on the recorded horizon.

    The tangential speed ``Re(w' conj(tau))`` is discretized by the
    arc-length displacement of each particle along the curve, and the
    interaction ``sum_j Re((w_i - w_j) conj(tau_i)) / |w_i - w_j|^2`` is
    evaluated from curve points at the arc-length midpoint of each interval.
    For the transplant of a parametrization path this reproduces ``rate_I``.
    """
    if path.kind != "curve":
        raise ConfigError("rate_J expects a path of curve points")
    s = lift_path(curve, path, tol).states
    dt = path.dt
    v = np.diff(s, axis=0) / dt
    mid = 0.5 * (s[1:] + s[:-1])
    w = curve.point(mid)
    tau = curve.tangent(mid)
    diff = w[:, :, None] - w[:, None, :]
    n = w.shape[1]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(off, (diff * np.conj(tau)[:, :, None]).real / np.abs(diff) ** 2, 0.0)
    S = terms.sum(axis=2)
    return float(0.5 * dt * _rate_integrand(v, S).sum())


def rate_report(curve, path, functional="I"):
    """``{functional, horizon, dt, value, error_estimate}``.

    The error estimate is the change in value when every other grid point
    is dropped (needs an even number of intervals; otherwise ``None``).
    """
    fn = rate_I if functional == "I" else rate_J
    value = fn(curve, path)
    err = None
    if (path.times.size - 1) % 2 == 0 and path.times.size >= 5:
        err = abs(value - fn(curve, path.coarsened()))
    return {"functional": functional, "horizon": path.horizon, "dt": path.dt,
            "value": value, "error_estimate": err}


# ---------------------------------------------------------------- test functions

_X, _Y = sympy.symbols("x y", real=True)
_ALLOWED = re.compile(r"^[0-9xy+\-*/().\seE]*$")


@dataclass
class CurveTestFunction:
    """Polynomial ``f(x, y)`` with ``z = x + i y``, derivatives from sympy.

    ``tags`` is a free-form tuple of declared symmetries (e.g. ``"even"``).
    """

    expression: str
    tags: tuple = ()
    _fns: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not _ALLOWED.match(self.expression):
            raise ConfigError(f"test function {self.expression!r}: only polynomials in x, y "
                              "with + - * / ** and parentheses are accepted")
        try:
            expr = sympy.sympify(self.expression, locals={"x": _X, "y": _Y})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"cannot parse test function {self.expression!r}: {exc}") from None
        if not expr.free_symbols <= {_X, _Y} or not expr.is_polynomial(_X, _Y):
            raise ConfigError(f"test function {self.expression!r} is not a polynomial in x, y")
        parts = {
            "f": expr,
            "fx": sympy.diff(expr, _X), "fy": sympy.diff(expr, _Y),
            "fxx": sympy.diff(expr, _X, 2), "fxy": sympy.diff(expr, _X, _Y),
            "fyy": sympy.diff(expr, _Y, 2),
        }
        self._fns = {k: sympy.lambdify((_X, _Y), v, "numpy") for k, v in parts.items()}

    def _eval(self, name, z):
        z = np.asarray(z, dtype=np.complex128)
        return np.broadcast_to(self._fns[name](z.real, z.imag), z.shape).astype(np.float64)

    def __call__(self, z):
        return self._eval("f", z)

    def dz(self, z):
        """Holomorphic derivative ``(f_x - i f_y) / 2`` of the polynomial extension."""
        return 0.5 * (self._eval("fx", z) - 1j * self._eval("fy", z))

    def ds(self, z, tau):
        """``2 Re(tau dz f)`` for unit tangent ``tau``."""
        return 2.0 * (np.asarray(tau) * self.dz(z)).real

    def ds2(self, z, tau, accel):
        """Second arc-length derivative ``tau^T H tau + Re(accel conj(grad))``.

        ``accel`` is ``gamma''`` (normal, length equal to the curvature).
        """
        tau = np.asarray(tau)
        accel = np.asarray(accel)
        tx, ty = tau.real, tau.imag
        hess = (self._eval("fxx", z) * tx * tx + 2.0 * self._eval("fxy", z) * tx * ty
                + self._eval("fyy", z) * ty * ty)
        return hess + accel.real * self._eval("fx", z) + accel.imag * self._eval("fy", z)


def _frames_at(curve, z, tol):
    s = curve.locate(np.asarray(z, dtype=np.complex128), tol=tol)
    return s, curve.tangent(s)


def tangential_derivative(curve, f, z, tol=1e-8):
    """``(d_s f)(z) = 2 Re(tau(z) d_z f(z))`` at points ``z`` on the curve.

    Raises
    ------
    OffCurvePoint
    """
    _, tau = _frames_at(curve, z, tol)
    return f.ds(z, tau)


def hydro_kernel(dsf_z, tau_z, dsf_w, tau_w, z, w):
    """``d_s f(z) Re(tau(z)/(z-w)) - d_s f(w) Re(tau(w)/(z-w))`` for ``z != w``."""
    d = z - w
    return dsf_z * (tau_z / d).real - dsf_w * (tau_w / d).real


def hydro_residual(curve, f, points, weights=None, beta=2.0, tol=1e-8):
    """``(beta/4) * double integral of the hydrodynamic kernel`` against ``mu``.

    ``mu = sum_k weights[k] delta_{points[k]}``. Off the diagonal the kernel
    is ``hydro_kernel``; on the diagonal (coincident points) it takes its
    limit value ``d_s^2 f``.
    """
    z = np.asarray(points, dtype=np.complex128).reshape(-1)
    if weights is None:
        w8 = np.full(z.size, 1.0 / z.size)
    else:
        w8 = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w8.shape != z.shape or np.any(w8 < 0) or abs(w8.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be nonnegative, one per point, summing to 1")
    s, tau = _frames_at(curve, z, tol)
    dsf = f.ds(z, tau)
    d2 = f.ds2(z, tau, curve.second_derivative(s))
    Z, Wp = z[:, None], z[None, :]
    same = Z == Wp
    with np.errstate(divide="ignore", invalid="ignore"):
        K = hydro_kernel(dsf[:, None], tau[:, None], dsf[None, :], tau[None, :], Z, Wp)
    K = np.where(same, d2[:, None], K)
    return float(0.25 * beta * (w8 @ K @ w8))


def generator_check(curve, f, X0, beta=2.0, h=0.05, substeps=5, seed=0, threads=None):
    """Per-sample ``d/dt mu_t(f)`` minus its hydrodynamic prediction.

    Each row of ``X0`` (configurations of ``N`` particles) is evolved by the
    SDE over the real time ``h / N``, i.e. over ``h`` on the scale
    ``mu_t = (1/N) sum delta_{Z_i(t/N)}``. The returned array holds
    ``(mu_h(f) - mu_0(f)) / h - hydro_residual(mu_0, f)``; its mean is
    ``O(h) + (1/2 - beta/4) / N * mu_0(d_s^2 f)`` and its standard deviation
    ``O(1 / (N sqrt(h)))`` from the martingale term.
    """
    from .coulomb import InverseTemperature
    from .sde import SimulationConfig, simulate_ensemble

    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    M, N = X0.shape
    dt = h / (N * substeps)
    cfg = SimulationConfig(curve, InverseTemperature.from_beta(beta), dt, h / N, X0[0],
                           seed=seed)
    _, states, _ = simulate_ensemble(cfg, X0, np.array([0, substeps]), threads=threads)
    f0 = f(curve.point(states[0])).mean(axis=1)
    f1 = f(curve.point(states[1])).mean(axis=1)
    pred = np.array([hydro_residual(curve, f, curve.point(row), beta=beta) for row in states[0]])
    return (f1 - f0) / h - pred
