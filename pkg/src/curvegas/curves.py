"""Jordan curves and their arc-length parametrization.

Curves are given analytically as finite Fourier series
``gamma_0(theta) = sum_k c_k exp(i k theta)``; circles and ellipses are the
one- and two-mode cases. :func:`build_arclength_curve` tabulates the inverse
of the arc-length function ``s(theta)`` so that ``gamma(s) = gamma_0(theta(s))``
has unit speed and period ``l``.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from shapely.geometry import LinearRing

from . import _kernels_py as _k
from .errors import (ConfigError, InsufficientSmoothness, InvalidCurve,
                     NonRegularCurve, OffCurvePoint, SelfIntersection)

TWO_PI = 2.0 * math.pi

_GL16 = leggauss(16)
_GL8 = leggauss(8)


@dataclass(frozen=True)
class CurveSpec:
    """Analytic description of a counterclockwise Jordan curve.

    Use the :meth:`circle`, :meth:`ellipse` and :meth:`fourier` constructors
    or :meth:`from_dict` for the JSON form.
    """

    kind: str
    radius: float = 0.0
    a: float = 0.0
    b: float = 0.0
    coeffs: tuple = ()
    k_min: int = 0

    @classmethod
    def circle(cls, radius=1.0):
        if not radius > 0:
            raise ConfigError(f"curve.radius must be positive, got {radius!r}")
        return cls("circle", radius=float(radius))

    @classmethod
    def ellipse(cls, a, b):
        if not (a > 0 and b > 0):
            raise ConfigError(f"curve.a and curve.b must be positive, got {a!r}, {b!r}")
        return cls("ellipse", a=float(a), b=float(b))

    @classmethod
    def fourier(cls, coeffs, k_min):
        coeffs = tuple(complex(c) for c in coeffs)
        if not coeffs:
            raise ConfigError("curve.coeffs must be non-empty")
        return cls("fourier", coeffs=coeffs, k_min=int(k_min))

    @classmethod
    def from_dict(cls, d):
        try:
            kind = d["kind"]
            if kind == "circle":
                return cls.circle(d.get("radius", 1.0))
            if kind == "ellipse":
                return cls.ellipse(d["a"], d["b"])
            if kind == "fourier":
                coeffs = [complex(re, im) for re, im in d["coeffs"]]
                return cls.fourier(coeffs, d["k_min"])
        except KeyError as exc:
            raise ConfigError(f"curve.{exc.args[0]} is required") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"curve: malformed parameters ({exc})") from None
        raise ConfigError(f"curve.kind must be circle, ellipse or fourier, got {kind!r}")

    def to_dict(self):
        if self.kind == "circle":
            return {"kind": "circle", "radius": self.radius}
        if self.kind == "ellipse":
            return {"kind": "ellipse", "a": self.a, "b": self.b}
        return {"kind": "fourier", "k_min": self.k_min,
                "coeffs": [[c.real, c.imag] for c in self.coeffs]}

    def modes(self):
        """Wavenumbers and coefficients of the Fourier representation."""
        if self.kind == "circle":
            return np.array([1]), np.array([complex(self.radius)])
        if self.kind == "ellipse":
            return (np.array([1, -1]),
                    np.array([0.5 * (self.a + self.b) + 0j, 0.5 * (self.a - self.b) + 0j]))
        ks = np.arange(self.k_min, self.k_min + len(self.coeffs))
        cs = np.array(self.coeffs, dtype=np.complex128)
        keep = cs != 0
        return ks[keep], cs[keep]


class KernelCurve:
    """Flat arrays describing an arc-length curve, consumed by the kernels.

    ``theta(s) = scale * s + p(s mod length)`` where ``p`` is cubic Hermite
    interpolated from the uniform table ``(p, dp)`` with spacing ``step``.
    """

    __slots__ = ("length", "scale", "step", "p", "dp", "ks", "cs", "exact")

    def __init__(self, length, p, dp, ks, cs, exact):
        self.length = float(length)
        self.scale = TWO_PI / self.length
        self.p = np.ascontiguousarray(p, dtype=np.float64)
        self.dp = np.ascontiguousarray(dp, dtype=np.float64)
        self.step = self.length / (self.p.shape[0] - 1)
        self.ks = np.ascontiguousarray(ks, dtype=np.int64)
        self.cs = np.ascontiguousarray(cs, dtype=np.complex128)
        self.exact = bool(exact)


def _speed(theta, ks, cs):
    return np.abs(np.exp(1j * np.multiply.outer(theta, ks.astype(float))) @ (1j * ks * cs))


def _gl_cells(edges, ks, cs, rule):
    """Integral of the speed over each cell ``[edges[i], edges[i+1]]``."""
    nodes, weights = rule
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    t = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    return (_speed(t, ks, cs) * weights).sum(axis=1) * half


class _ArcLengthFunction:
    """Accurate ``s(theta)`` on ``[0, 2 pi]`` by composite Gauss-Legendre."""

    def __init__(self, ks, cs, tol):
        n = 64
        while True:
            edges = np.linspace(0.0, TWO_PI, n + 1)
            fine = _gl_cells(edges, ks, cs, _GL16)
            coarse = _gl_cells(edges, ks, cs, _GL8)
            total = fine.sum()
            err = abs(total - coarse.sum())
            if err <= 0.01 * tol * total or n >= 1 << 16:
                break
            n *= 2
        self.ks, self.cs = ks, cs
        self.edges = edges
        self.cum = np.concatenate([[0.0], np.cumsum(fine)])
        self.length = float(self.cum[-1])
        self.error = err

    def __call__(self, theta):
        h = self.edges[1]
        j = np.clip(np.floor(theta / h).astype(np.int64), 0, len(self.edges) - 2)
        lo = self.edges[j]
        nodes, weights = _GL16
        half = 0.5 * (theta - lo)
        t = (lo + half)[..., None] + half[..., None] * nodes
        return self.cum[j] + (_speed(t, self.ks, self.cs) * weights).sum(axis=-1) * half

    def invert(self, s):
        theta = np.interp(s, self.cum, self.edges)
        for _ in range(8):
            delta = (self(theta) - s) / _speed(theta, self.ks, self.cs)
            theta = theta - delta
            if np.max(np.abs(delta)) < 1e-15:
                break
        return theta


def _hermite(p, dp, step, r):
    u = r / step
    idx = np.minimum(np.floor(u).astype(np.int64), p.shape[0] - 2)
    t = u - idx
    t1 = 1.0 - t
    return ((1 + 2 * t) * t1 * t1 * p[idx] + t * t1 * t1 * step * dp[idx]
            + t * t * (3 - 2 * t) * p[idx + 1] + t * t * (t - 1) * step * dp[idx + 1])


def _hermite_slope(p, dp, step, r):
    u = r / step
    idx = np.minimum(np.floor(u).astype(np.int64), p.shape[0] - 2)
    t = u - idx
    return (6 * t * (t - 1) * (p[idx] - p[idx + 1]) / step
            + (1 - t) * (1 - 3 * t) * dp[idx] + t * (3 * t - 2) * dp[idx + 1])


def _check_shape(ks, cs):
    grid = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
    speed = _speed(grid, ks, cs)
    if speed.min() <= 1e-8 * speed.max():
        raise NonRegularCurve("derivative of the parametrization vanishes on the grid")
    # signed area = pi * sum k |c_k|^2
    if float(np.sum(ks * np.abs(cs) ** 2)) <= 0.0:
        raise InvalidCurve("curve must be oriented counterclockwise")
    coarse = np.linspace(0.0, TWO_PI, 1024, endpoint=False)
    z = np.exp(1j * np.multiply.outer(coarse, ks.astype(float))) @ cs
    dist = np.abs(z[:, None] - z[None, :])
    dtheta = np.abs(coarse[:, None] - coarse[None, :])
    dtheta = np.minimum(dtheta, TWO_PI - dtheta)
    np.fill_diagonal(dtheta, 1.0)
    ratio = dist / dtheta
    np.fill_diagonal(ratio, np.inf)
    if ratio.min() <= 1e-6 * speed.max():
        raise SelfIntersection("parametrization is not injective on one period")
    if not LinearRing(np.column_stack([z.real, z.imag])).is_simple:
        raise SelfIntersection("curve polygon self-intersects")


class ArcLengthCurve:
    """Unit-speed, ``length``-periodic parametrization of a Jordan curve.

    Immutable after construction. Array arguments are accepted everywhere and
    positions are reduced modulo ``length`` before lookup.
    """

    def __init__(self, spec, kernel, smoothness_order, table_error):
        self.spec = spec
        self.kernel = kernel
        self.smoothness_order = smoothness_order
        self.table_error = table_error

    @property
    def length(self):
        return self.kernel.length

    @property
    def table_size(self):
        return self.kernel.p.shape[0]

    def theta(self, s):
        return _k.theta_of(s, self.kernel)

    def point(self, s):
        """Curve point ``gamma(s)``."""
        z, = _k.fourier_eval(self.theta(s), self.kernel, 0)
        return z

    def tangent(self, s):
        """Unit tangent ``gamma'(s)`` (counterclockwise)."""
        _, dz = _k.fourier_eval(self.theta(s), self.kernel, 1)
        return dz / np.abs(dz)

    def curvature(self, s):
        """Signed curvature, ``Im(gamma'' conj(gamma'))`` at unit speed."""
        if self.smoothness_order < 2:
            raise InsufficientSmoothness("curvature needs smoothness_order >= 2")
        _, dz, ddz = _k.fourier_eval(self.theta(s), self.kernel, 2)
        return (ddz * dz.conj()).imag / np.abs(dz) ** 3

    def second_derivative(self, s):
        """``gamma''(s) = i k(s) gamma'(s)``."""
        if self.smoothness_order < 2:
            raise InsufficientSmoothness("second derivative needs smoothness_order >= 2")
        _, dz, ddz = _k.fourier_eval(self.theta(s), self.kernel, 2)
        speed = np.abs(dz)
        tau = dz / speed
        return 1j * (ddz * dz.conj()).imag / speed ** 3 * tau

    def locate(self, z, tol=1e-8):
        """Arc-length position in ``[0, length)`` of points lying on the curve.

        Raises :class:`OffCurvePoint` if a point is farther than ``tol``
        (relative to the curve's size) from the curve.
        """
        z = np.asarray(z, dtype=np.complex128)
        flat = z.reshape(-1)
        kc = self.kernel
        grid_s = np.linspace(0.0, kc.length, 2048, endpoint=False)
        grid_z = self.point(grid_s)
        nearest = np.argmin(np.abs(flat[:, None] - grid_z[None, :]), axis=1)
        theta = self.theta(grid_s[nearest])
        for _ in range(30):
            g, dg, ddg = _k.fourier_eval(theta, kc, 2)
            f = ((g - flat) * dg.conj()).real
            fp = np.abs(dg) ** 2 + ((g - flat) * ddg.conj()).real
            step = f / fp
            theta = theta - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        g, = _k.fourier_eval(theta, kc, 0)
        scale = np.abs(kc.cs).sum()
        dist = np.abs(g - flat)
        if np.any(dist > tol * scale):
            raise OffCurvePoint(f"point at distance {dist.max():.3g} from the curve")
        theta = np.mod(theta, TWO_PI)
        s = self._s_of_theta(theta)
        return np.mod(s, kc.length).reshape(z.shape)

    def _s_of_theta(self, theta):
        kc = self.kernel
        if kc.exact:
            return theta / kc.scale
        # invert theta(s) by Newton on the Hermite table
        s = theta / kc.scale
        for _ in range(50):
            r = np.mod(s, kc.length)
            th = r * kc.scale + _hermite(kc.p, kc.dp, kc.step, r)
            _, dz = _k.fourier_eval(th, kc, 1)
            step = (th - theta) * np.abs(dz)
            step = np.where(np.abs(step) > 0.5 * kc.length, 0.0, step)
            s = s - step
            if np.max(np.abs(step), initial=0.0) < 1e-14 * kc.length:
                break
        return s

    def __repr__(self):
        return f"ArcLengthCurve({self.spec.kind}, length={self.length:.12g})"


def build_arclength_curve(spec, tol=1e-12, smoothness_order=3):
    """Reparametrize ``spec`` by arc length.

    Parameters
    ----------
    spec : CurveSpec
    tol : float
        Target relative accuracy of the length and absolute accuracy of the
        tabulated ``theta(s)``; the speed of ``gamma`` is within ``50 * tol``
        of one. Must lie in ``(0, 1e-4]``.
    smoothness_order : int
        Number of derivatives the caller may query (analytic curves support
        any; lowering it is only useful for testing).

    Returns
    -------
    ArcLengthCurve
        Shared between calls with equal arguments (curves are immutable).
    """
    return _build_cached(spec, float(tol), int(smoothness_order))


@functools.lru_cache(maxsize=32)
def _build_cached(spec, tol, smoothness_order):
    if not 0 < tol <= 1e-4:
        raise ConfigError(f"tol must lie in (0, 1e-4], got {tol!r}")
    if smoothness_order < 1:
        raise ConfigError("smoothness_order must be >= 1")
    ks, cs = spec.modes()
    if ks.size == 1 and ks[0] == 1:
        length = TWO_PI * abs(cs[0])
        kernel = KernelCurve(length, np.zeros(2), np.zeros(2), ks, cs, exact=True)
        return ArcLengthCurve(spec, kernel, smoothness_order, 0.0)
    if ks.size == 1 and ks[0] == -1:
        raise InvalidCurve("curve must be oriented counterclockwise")
    if ks.size == 1:
        raise SelfIntersection(f"single mode k={ks[0]} does not trace a Jordan curve")
    _check_shape(ks, cs)

    arc = _ArcLengthFunction(ks, cs, tol)
    length = arc.length
    scale = TWO_PI / length
    m = 256
    while True:
        s_nodes = np.linspace(0.0, length, m + 1)
        theta = arc.invert(s_nodes)
        theta[0], theta[-1] = 0.0, TWO_PI
        speed = _speed(theta, ks, cs)
        p = theta - scale * s_nodes
        dp = 1.0 / speed - scale
        step = length / m
        mids = s_nodes[:-1] + 0.5 * step
        err = np.max(np.abs(_hermite(p, dp, step, mids) + scale * mids - arc.invert(mids)))
        # the slope error of a cubic Hermite peaks at t = (3 -+ sqrt 3) / 6
        probe = (s_nodes[:-1, None] + step * np.array([0.2113248654, 0.7886751346])).ravel()
        exact = _speed(arc.invert(probe), ks, cs)
        slope_err = np.max(np.abs((_hermite_slope(p, dp, step, probe) + scale) * exact - 1.0))
        if (err * speed.max() <= tol and slope_err <= 50 * tol) or m >= 1 << 20:
            break
        # value error decays like m^-4 and slope error like m^-3
        need = max((err * speed.max() / tol) ** 0.25, (slope_err / (25 * tol)) ** (1 / 3), 2.0)
        m = min(m << int(math.ceil(math.log2(need))), 1 << 20)
    # Fritsch-Carlson: the cubic Hermite interpolant of theta is monotone
    secant = np.diff(p + scale * s_nodes) / step
    alpha = (dp[:-1] + scale) / secant
    beta = (dp[1:] + scale) / secant
    if np.any(secant <= 0) or np.any(alpha ** 2 + beta ** 2 > 9.0):
        raise NonRegularCurve("arc-length table is not monotone; curve too irregular")
    kernel = KernelCurve(length, p, dp, ks, cs, exact=False)
    return ArcLengthCurve(spec, kernel, smoothness_order, float(err))
