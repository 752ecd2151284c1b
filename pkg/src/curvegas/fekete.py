"""Fekete points by the zero-noise gradient flow ``u' = -grad V(u)``.

The flow is integrated by explicit Euler with backtracking: a step that
raises the energy or leaves the ordered chamber is retried with half the
step size, so the energy is non-increasing along accepted iterates.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .coulomb import Configuration, check_ordered, positions_of
from .errors import ConfigError, NonConvergence, StepTooLarge


@dataclass
class FeketeResult:
    points: Configuration
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    dt_final: float
    energy_history: list = field(default_factory=list, repr=False)

    @property
    def log_discriminant(self):
        return -2.0 * self.energy

    @property
    def discriminant(self):
        """``prod_{k != l} |z_k - z_l| = exp(-2 V)``; ``inf`` on overflow."""
        try:
            return math.exp(self.log_discriminant)
        except OverflowError:
            return math.inf

    def to_json_dict(self, curve=None):
        out = {
            "positions": [float(v) for v in self.points.positions],
            "energy": self.energy,
            "log_discriminant": self.log_discriminant,
            "discriminant": self.discriminant if math.isfinite(self.discriminant) else None,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if curve is not None:
            out["points"] = [[z.real, z.imag] for z in curve.point(self.points.positions)]
        return out


def equidistant(curve, N, offset=0.0):
    """``N`` points equally spaced in arc length starting at ``offset``."""
    x = offset + curve.length * np.arange(N) / N
    return Configuration(_backend.kernels.quotient_rows(x[None, :], curve.length)[0],
                         curve.length)


def _energy_and_force(kern, kc, x):
    X = x[None, :]
    return float(kern.energy_batch(X, kc)[0]), kern.drift_batch(X, 1.0, kc)[0]


def gradient_flow(curve, initial, dt=None, tol=1e-10, max_iter=100000, raise_on_failure=True,
                  min_dt=1e-14, growth=1.2):
    """Run explicit Euler on ``u' = -grad V(u)`` until ``max|grad V| <= tol``.

    Parameters
    ----------
    curve : ArcLengthCurve
    initial : Configuration or array
    dt : float, optional
        Initial step; defaults to ``0.1 * (l / N)^2``. After an accepted step
        the step grows by ``growth`` up to ``64 * dt``; a rejected step halves it.
    tol : float
        Convergence threshold on the largest gradient component.
    max_iter : int
        Maximum number of accepted steps.
    raise_on_failure : bool
        Raise ``NonConvergence`` (with the best iterate attached) when
        ``max_iter`` is reached; otherwise return it with ``converged=False``.

    Near a minimum the energy change of one step drops below the rounding
    level of ``V``. A step whose energy change is within 64 ulps is accepted
    only when the gradient at the new point still has a positive component
    along the step, so steps that overshoot the line minimum are halved.

    Raises
    ------
    StepTooLarge
        When halving cannot produce a non-increasing energy before the step
        falls below ``min_dt``.
    """
    kern = _backend.kernels
    kc = curve.kernel
    l = curve.length
    x = np.array(positions_of(initial), dtype=np.float64)
    check_ordered(x, l)
    x = kern.quotient_rows(x[None, :], l)[0]
    N = x.size
    if dt is None:
        dt = 0.1 * (l / N) ** 2
    if not dt > 0 or not tol > 0 or max_iter < 0:
        raise ConfigError("dt and tol must be positive, max_iter non-negative")
    dt_max = 64.0 * dt
    V, F = _energy_and_force(kern, kc, x)
    gnorm = float(np.abs(F).max()) if N > 1 else 0.0
    it = 0
    history = [V]
    while gnorm > tol and it < max_iter:
        while True:
            y = x + dt * F
            if kern.min_gaps(y[None, :], l)[0] > 0.0:
                W, G = _energy_and_force(kern, kc, y)
                band = 64.0 * np.spacing(abs(V) + 1.0)
                if W < V - band:
                    break
                # energy changes within rounding are decided by the slope at y:
                # accept only if the step has not overshot the line minimum
                if W - V <= band and float(F @ G) > 0.0:
                    break
            dt *= 0.5
            if dt < min_dt:
                raise StepTooLarge(
                    f"energy increases for every step down to dt = {dt:.3g} at iteration {it}; "
                    f"|grad V| = {gnorm:.3g}")
        x = kern.quotient_rows(y[None, :], l)[0]
        V, F = W, G
        history.append(V)
        gnorm = float(np.abs(F).max())
        it += 1
        dt = min(dt * growth, dt_max)
    result = FeketeResult(Configuration(x, l), V, gnorm, it, gnorm <= tol, dt, history)
    if not result.converged and raise_on_failure:
        raise NonConvergence(
            f"gradient flow did not reach |grad V| <= {tol:g} in {max_iter} iterations "
            f"(reached {gnorm:.3g})", result)
    return result


def flow_path(curve, initial, dt, n_steps):
    """Euler path of the gradient flow on a uniform time grid.

    Returns a ``DiscretePath`` with ``n_steps + 1`` states; the path is the
    zero-noise limit of the kappa-form SDE integrator.
    """
    from .functionals import DiscretePath

    x = np.array(positions_of(initial), dtype=np.float64)
    check_ordered(x, curve.length)
    steps = np.arange(n_steps + 1, dtype=np.int64)
    records, fail, gap = _backend.kernels.em_run(x[None, :], 1.0, 0.0, dt, steps, 0, 0, 0, 0,
                                                 curve.kernel)
    if fail[0] >= 0:
        raise StepTooLarge(f"flow step {fail[0]} leaves the chamber (gap {gap[0]:.3g}); "
                           "reduce dt")
    return DiscretePath(steps * dt, records[:, 0, :], kind="parameter")


def transfinite_diameter(curve, N_list, tol=1e-9, max_iter=200000, initial=None):
    """``(N, Delta_N^(1/(N(N-1))))`` from converged Fekete configurations.

    Each flow starts from equidistant points (or ``initial[N]``).
    """
    N_list = [int(n) for n in N_list]
    if any(n < 2 for n in N_list) or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N_list must be increasing integers >= 2")
    out = []
    for N in N_list:
        start = equidistant(curve, N) if initial is None else initial[N]
        res = gradient_flow(curve, start, tol=tol, max_iter=max_iter)
        out.append((N, math.exp(res.log_discriminant / (N * (N - 1))), res))
    return out


def extrapolate_capacity(table):
    """Least-squares fit ``estimate(N) = c + a / N``.

    Parameters
    ----------
    table : sequence of ``(N, estimate, ...)``

    Returns
    -------
    dict with ``capacity`` (``c``), ``slope`` (``a``) and ``residual`` (RMS)
    """
    Ns = np.array([row[0] for row in table], dtype=np.float64)
    est = np.array([row[1] for row in table], dtype=np.float64)
    if Ns.size < 2:
        raise ConfigError("need at least two N values to extrapolate")
    A = np.column_stack([np.ones_like(Ns), 1.0 / Ns])
    coef, *_ = np.linalg.lstsq(A, est, rcond=None)
    resid = est - A @ coef
    return {"capacity": float(coef[0]), "slope": float(coef[1]),
            "residual": float(np.sqrt(np.mean(resid ** 2)))}
