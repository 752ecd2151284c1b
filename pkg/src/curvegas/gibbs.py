"""Metropolis sampling of the stationary Coulomb gas on a curve.

The target on the cylinder ``E`` has unnormalized log density
``-beta * V(x)``. Sites are updated one at a time by a Gaussian random walk;
proposals that leave the cyclic order have zero density and are rejected.
Independent chains run in lockstep and draw their randomness from a
counter-based generator keyed by ``(seed, chain, sweep, site)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, _kernels_py
from ._parallel import run_chunks
from .coulomb import Configuration, check_ordered, cyclic_gaps, positions_of
from .errors import ConfigError, SupportViolation

TARGET_ACCEPTANCE = 0.4


@dataclass
class SampleBatch:
    """Thinned post-burn-in samples, chain-major.

    ``samples[k]`` came from chain ``chains[k]``; within a chain the rows are
    in sampling order.
    """

    samples: np.ndarray
    chains: np.ndarray
    beta: float
    curve: object = field(repr=False)
    chain_meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def acceptance_rate(self):
        return self.chain_meta["acceptance_rate"]

    def configurations(self):
        l = self.curve.length
        return [Configuration(row, l) for row in self.samples]

    def by_chain(self, values):
        """Split a per-sample array into a list of per-chain arrays."""
        values = np.asarray(values)
        return [values[self.chains == c] for c in np.unique(self.chains)]

    def csv_header(self):
        return ["chain"] + [f"x{i + 1}" for i in range(self.samples.shape[1])]


def _log_target(curve, x, beta):
    x = np.asarray(x, dtype=np.float64)
    if np.any(cyclic_gaps(x, curve.length) <= 0.0):
        return -math.inf
    return -beta * float(_backend.kernels.energy_batch(x[None, :], curve.kernel)[0])


def log_acceptance(curve, x, x_new, beta):
    """``log min(1, pi(x_new) / pi(x))``; ``-inf`` off the ordered chamber."""
    lo = _log_target(curve, x_new, beta)
    if lo == -math.inf:
        return -math.inf
    return min(0.0, lo - _log_target(curve, x, beta))


def mcmc_step(curve, state, beta, proposal_scale, seed, chain=0, sweep=0, site=0):
    """One single-site Metropolis update of ``state[site]``.

    Uses the same random numbers as site ``site`` of sweep ``sweep`` in
    ``sample_stationary`` chain ``chain``.

    Returns
    -------
    (Configuration, bool)
        New state (quotiented into ``E``) and whether the move was accepted.
    """
    x = np.array(positions_of(state), dtype=np.float64)
    l = curve.length
    check_ordered(x, l)
    key = int(seed) ^ _kernels_py.MCMC_SALT
    xi = float(_kernels_py.normals(key, chain, sweep, site, 0))
    u = float(_kernels_py.uniforms(key, chain, sweep, site, 1, 2))
    y = x.copy()
    y[site] += proposal_scale * xi
    log_alpha = log_acceptance(curve, x, y, beta)
    accepted = log_alpha > -math.inf and (u == 0.0 or math.log(u) < log_alpha)
    out = y if accepted else x
    out = _backend.kernels.quotient_rows(out[None, :], l)[0]
    return Configuration(out, l), bool(accepted)


def _initial_states(curve, N, n_chains, seed):
    """Sorted uniform positions per chain, one row each."""
    rng = np.random.default_rng([int(seed), 0x1A17])
    X = np.sort(rng.uniform(0.0, curve.length, size=(n_chains, N)), axis=1)
    return _backend.kernels.quotient_rows(X, curve.length)


def sample_stationary(curve, beta, N, n_samples, burn_in=1000, thin=1, seed=0, n_chains=4,
                      initial=None, tune_interval=50, threads=None):
    """Draw ``n_samples`` configurations from the Coulomb gas at ``beta``.

    Parameters
    ----------
    curve : ArcLengthCurve
    beta : float
        Positive and finite; unlike the SDE any ``beta > 0`` is allowed.
    N : int
        Number of particles.
    n_samples : int
        Total retained samples, spread evenly over the chains.
    burn_in : int
        Sweeps discarded per chain. The proposal scale of each chain is
        tuned towards acceptance 0.4 every ``tune_interval`` burn-in sweeps
        and then frozen.
    thin : int
        Sweeps between retained samples.
    seed : int
    n_chains : int
    initial : array, shape (n_chains, N), optional
        Defaults to independent sorted uniform positions.

    Returns
    -------
    SampleBatch
    """
    beta = float(beta)
    if not (beta > 0 and math.isfinite(beta)):
        raise ConfigError(f"beta must be positive and finite, got {beta!r}")
    if N < 1 or n_samples < 1 or n_chains < 1 or thin < 1 or burn_in < 0:
        raise ConfigError("N, n_samples, n_chains and thin must be >= 1; burn_in >= 0")
    l = curve.length
    kern = _backend.kernels
    kc = curve.kernel
    if initial is None:
        X = _initial_states(curve, N, n_chains, seed)
    else:
        X = np.array(initial, dtype=np.float64).reshape(n_chains, N)
        for row in X:
            check_ordered(row, l)
        X = kern.quotient_rows(X, l)
    scales = np.full(n_chains, 0.5 * l / N)

    def sweeps(X, n_sweeps, thin_, sweep_offset):
        def work(a, b):
            return kern.mcmc_run(X[a:b], beta, scales[a:b], n_sweeps, thin_, int(seed), a,
                                 sweep_offset, kc)
        parts = run_chunks(work, n_chains, threads)
        return (np.concatenate([p[0] for p in parts], axis=1),
                np.concatenate([p[1] for p in parts]),
                np.concatenate([p[2] for p in parts]))

    done = 0
    while done < burn_in:
        n = min(tune_interval, burn_in - done)
        _, X, acc = sweeps(X, n, n, done)
        rate = acc / (n * N)
        scales = np.clip(scales * np.exp(2.0 * (rate - TARGET_ACCEPTANCE)), 1e-9 * l, l)
        done += n

    per_chain = -(-n_samples // n_chains)
    records, X, acc = sweeps(X, per_chain * thin, thin, burn_in)
    samples = np.swapaxes(records, 0, 1).reshape(-1, N)[:n_samples]
    chains = np.repeat(np.arange(n_chains), per_chain)[:n_samples]
    meta = {
        "seed": int(seed),
        "burn_in": int(burn_in),
        "thin": int(thin),
        "n_chains": int(n_chains),
        "proposal_scales": [float(s) for s in scales],
        "acceptance_rate": float(acc.sum() / (per_chain * thin * N * n_chains)),
        "acceptance_by_chain": [float(a / (per_chain * thin * N)) for a in acc],
        "backend": _backend.BACKEND,
    }
    return SampleBatch(samples, chains, beta, curve, meta)


# ---------------------------------------------------------------- test functions

def _bump(u):
    """``exp(1 - 1/(1 - u^2))`` on ``|u| < 1`` with first two derivatives."""
    u = np.asarray(u, dtype=np.float64)
    inside = np.abs(u) < 1.0
    w = np.where(inside, 1.0 - u * u, 1.0)
    f = np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
    d1 = np.where(inside, -2.0 * u / (w * w) * f, 0.0)
    d2 = np.where(inside, f * (4.0 * u * u / w ** 4 - (2.0 + 6.0 * u * u) / w ** 3), 0.0)
    return f, d1, d2


class GapBump:
    """Smooth bump in the consecutive gaps ``g_i = x_{i+1} - x_i``.

    ``phi(x) = prod_i bump((g_i - c_i) / w_i)`` for ``i = 1..N-1``. Being a
    function of gaps it is invariant under ``x -> x + c * (1,...,1)`` and
    hence well defined on the cylinder. Its support stays strictly inside
    ``E`` when every ``c_i - w_i > 0`` and ``sum(c_i + w_i) < l``.
    """

    def __init__(self, centers, widths):
        self.centers = np.atleast_1d(np.asarray(centers, dtype=np.float64))
        self.widths = np.broadcast_to(np.asarray(widths, dtype=np.float64),
                                      self.centers.shape).copy()
        if np.any(self.widths <= 0):
            raise ConfigError("bump widths must be positive")

    def check_support(self, period):
        lo = self.centers - self.widths
        hi = (self.centers + self.widths).sum()
        if np.any(lo <= 0.0) or hi >= period:
            raise SupportViolation(
                f"bump support reaches the chamber boundary (min lower gap {lo.min():.3g}, "
                f"max gap sum {hi:.3g}, period {period:.6g})")

    def evaluate(self, X):
        """``(phi, grad, laplacian)`` for configurations ``X`` of shape (M, N)."""
        X = np.atleast_2d(X)
        M, N = X.shape
        if self.centers.size != N - 1:
            raise ConfigError(f"bump has {self.centers.size} gaps, configuration has {N - 1}")
        g = np.diff(X, axis=1)
        f, d1, d2 = _bump((g - self.centers) / self.widths)
        d1 = d1 / self.widths
        d2 = d2 / self.widths ** 2
        phi = f.prod(axis=1)
        # partial products excluding one or two factors, without dividing by zero
        G = np.zeros((M, N - 1))
        H = np.zeros((M, N - 1, N - 1))
        for i in range(N - 1):
            rest = np.delete(f, i, axis=1).prod(axis=1)
            G[:, i] = d1[:, i] * rest
            H[:, i, i] = d2[:, i] * rest
            for j in range(i + 1, N - 1):
                rest2 = np.delete(f, [i, j], axis=1).prod(axis=1)
                H[:, i, j] = H[:, j, i] = d1[:, i] * d1[:, j] * rest2
        grad = np.zeros((M, N))
        grad[:, 1:] += G
        grad[:, :-1] -= G
        # d g_i / d x = e_{i+1} - e_i, so the Laplacian contracts H with the
        # tridiagonal (2, -1) Gram matrix
        lap = 2.0 * np.einsum("mii->m", H)
        if N > 2:
            lap -= 2.0 * np.einsum("mi->m", H[:, np.arange(N - 2), np.arange(1, N - 1)])
        return phi, grad, lap


class ConstantFunction:
    """``phi = value`` on the support; all derivatives vanish."""

    def __init__(self, value=1.0):
        self.value = float(value)

    def check_support(self, period):
        pass

    def evaluate(self, X):
        X = np.atleast_2d(X)
        M, N = X.shape
        return np.full(M, self.value), np.zeros((M, N)), np.zeros(M)


def generator_values(curve, X, beta, test_fn, drift_sign=1.0):
    """``L phi = 1/2 Laplacian(phi) + b . grad(phi)`` at each row of ``X``.

    ``drift_sign = -1`` flips the drift, a deliberately wrong generator used
    as a negative control.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _, grad, lap = test_fn.evaluate(X)
    active = np.any(grad != 0.0, axis=1)
    out = 0.5 * lap
    if active.any():
        b = _backend.kernels.drift_batch(X[active], 0.5 * beta * drift_sign, curve.kernel)
        out[active] += (b * grad[active]).sum(axis=1)
    return out


def batch_means_stderr(series_by_chain, n_batches=20):
    """Standard error of the grand mean from non-overlapping batch means."""
    means = []
    for s in series_by_chain:
        s = np.asarray(s, dtype=np.float64)
        k = max(1, min(n_batches, s.size // 2))
        size = s.size // k
        means.extend(s[: k * size].reshape(k, size).mean(axis=1))
    means = np.asarray(means)
    if means.size < 2:
        return math.inf
    return float(means.std(ddof=1) / math.sqrt(means.size))


def stationarity_residual(batch, test_fn, drift_sign=1.0, n_batches=20):
    """Monte Carlo estimate of ``E[L phi]`` under the sampled law.

    At stationarity the estimate is zero up to noise; ``|estimate| <= 3 *
    stderr`` certifies consistency.

    Returns
    -------
    (estimate, stderr)

    Raises
    ------
    SupportViolation
        If ``test_fn`` does not vanish near the chamber boundary.
    """
    l = batch.curve.length
    test_fn.check_support(l)
    vals = generator_values(batch.curve, batch.samples, batch.beta, test_fn, drift_sign)
    est = float(vals.mean())
    if np.all(vals == 0.0):
        return est, 0.0
    return est, batch_means_stderr(batch.by_chain(vals), n_batches)


def split_rhat(series_by_chain):
    """Split-R-hat convergence statistic over equally long chains."""
    halves = []
    for s in series_by_chain:
        s = np.asarray(s, dtype=np.float64)
        h = s.size // 2
        halves.extend([s[:h], s[h:2 * h]])
    n = min(h.size for h in halves)
    chains = np.array([h[:n] for h in halves])
    if n < 2:
        return math.nan
    W = chains.var(axis=1, ddof=1).mean()
    B = n * chains.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0
    return float(math.sqrt(((n - 1) / n * W + B / n) / W))
