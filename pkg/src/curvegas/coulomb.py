"""Logarithmic interaction of particles on a curve.

Conventions: the stationary density is proportional to
``prod_{i != j} |gamma(x_i) - gamma(x_j)|^(beta/2)``, a product over ordered
pairs, so each unordered pair carries exponent ``beta`` and
``log rho = -beta * V`` with ``V = -sum_{i<j} log|gamma(x_i) - gamma(x_j)|``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ConfigError, DegenerateConfiguration, DomainViolation


@dataclass(frozen=True)
class InverseTemperature:
    """Inverse temperature ``beta`` and diffusion parameter ``kappa = 2 / beta``.

    ``beta = inf`` (``kappa = 0``) is the zero-noise limit.
    """

    beta: float
    kappa: float

    @classmethod
    def from_beta(cls, beta):
        beta = float(beta)
        if not beta > 0:
            raise ConfigError(f"beta must be positive, got {beta!r}")
        return cls(beta, 0.0 if math.isinf(beta) else 2.0 / beta)

    @classmethod
    def from_kappa(cls, kappa):
        kappa = float(kappa)
        if not kappa >= 0 or math.isinf(kappa):
            raise ConfigError(f"kappa must be finite and non-negative, got {kappa!r}")
        return cls(math.inf if kappa == 0 else 2.0 / kappa, kappa)


@dataclass(frozen=True)
class Configuration:
    """Ordered particle positions in the cylinder
    ``E = {0 <= x_1 < ... < x_N < x_1 + l < 2l}``."""

    positions: np.ndarray
    period: float

    def __post_init__(self):
        x = np.array(self.positions, dtype=np.float64).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)
        check_ordered(x, self.period)
        if not 0.0 <= x[0] < self.period:
            raise DomainViolation(f"x_1 = {x[0]!r} is outside [0, l); use quotient_map")

    @property
    def n(self):
        return self.positions.shape[0]

    def __len__(self):
        return self.n


def positions_of(config):
    return np.asarray(getattr(config, "positions", config), dtype=np.float64)


def cyclic_gaps(x, period):
    """Gaps ``x_{i+1} - x_i`` followed by the wrap gap ``x_1 + l - x_N``."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([np.diff(x, axis=-1), (x[..., :1] + period - x[..., -1:])], axis=-1)


def check_ordered(x, period):
    """Raise unless ``x`` lies in the open chamber ``x_1 < ... < x_N < x_1 + l``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise DomainViolation("configuration must be a non-empty finite vector")
    g = cyclic_gaps(x, period)
    if np.any(g == 0.0):
        raise DegenerateConfiguration("two particles coincide")
    if np.any(g < 0.0):
        raise DomainViolation("positions are not cyclically ordered within one period")


def _check_distinct(curve, x):
    r = np.sort(np.mod(x, curve.length), axis=-1)
    if r.shape[-1] > 1 and np.any(cyclic_gaps(r, curve.length) <= 0.0):
        raise DegenerateConfiguration("two particles coincide on the curve")


def energy(curve, config):
    """Logarithmic energy ``V(x) = -sum_{i<j} log|gamma(x_i) - gamma(x_j)|``.

    Returns ``+inf`` when a chord underflows (below 1e-300).
    """
    x = positions_of(config)
    _check_distinct(curve, x)
    return float(_backend.kernels.energy_batch(x[None, :], curve.kernel)[0])


def log_density_unnormalized(curve, config, beta):
    """``log prod_{i != j} |gamma(x_i) - gamma(x_j)|^(beta/2) = -beta * V(x)``."""
    return -beta * energy(curve, config)


def drift(curve, config, beta):
    """``b_i = (beta/2) sum_{j != i} Re(gamma'(x_i) / (gamma(x_i) - gamma(x_j)))``.

    Equals ``grad log(rho) / 2 = -(beta/2) grad V``.
    """
    x = positions_of(config)
    _check_distinct(curve, x)
    return _backend.kernels.drift_batch(x[None, :], 0.5 * beta, curve.kernel)[0]


def grad_energy(curve, config):
    """``grad V``, i.e. ``-drift`` at ``beta = 2``."""
    x = positions_of(config)
    _check_distinct(curve, x)
    return -_backend.kernels.drift_batch(x[None, :], 1.0, curve.kernel)[0]


def discriminant(points):
    """``prod_{k != l} |z_k - z_l|`` over ordered pairs."""
    z = np.asarray(points, dtype=np.complex128).reshape(-1)
    iu, ju = np.triu_indices(z.size, 1)
    chords = np.abs(z[iu] - z[ju])
    if np.any(chords == 0.0):
        raise DegenerateConfiguration("discriminant of coincident points")
    # log-sum keeps large N from overflowing intermediate products
    return math.exp(2.0 * np.log(chords).sum())


def log_discriminant(points):
    z = np.asarray(points, dtype=np.complex128).reshape(-1)
    iu, ju = np.triu_indices(z.size, 1)
    chords = np.abs(z[iu] - z[ju])
    if np.any(chords == 0.0):
        raise DegenerateConfiguration("discriminant of coincident points")
    return 2.0 * float(np.log(chords).sum())
