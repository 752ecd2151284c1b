"""Pure numpy implementation of the hot kernels.

This module is the reference semantics for ``_kernels.pyx``; both expose the
same functions with the same signatures. Batches are arrays of shape
``(M, N)``: ``M`` independent configurations of ``N`` particles.

Chords ``gamma(x_i) - gamma(x_j)`` are never formed by subtracting two curve
points. With ``gamma(x) = sum_k c_k exp(i k theta(x))`` they are evaluated as
``sum_k c_k 2i sin(k d / 2) exp(i k m)`` where ``d`` is the parameter gap
(exact for nearby floats) and ``m`` the midpoint, so the relative error of a
chord stays at machine precision however close the two particles are.
"""

import math

import numpy as np

BACKEND = "python"

TWO_PI = 2.0 * math.pi
TINY_CHORD = 1e-300

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INC = np.uint64(0x632BE59BD9B4E019)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

SDE_SALT = 0x5DE0
MCMC_SALT = 0x3C3C


# ---------------------------------------------------------------- counter RNG

def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _hash(seed, a, b, c, d, lane):
    """Stateless 64-bit hash of the key ``(seed, a, b, c, d, lane)``.

    All arguments broadcast; returns uint64 array.
    """
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.uint64) ^ _GOLDEN)
        for v in (a, b, c, d, lane):
            h = _mix(h + np.asarray(v, dtype=np.uint64) * _GOLDEN + _INC)
    return h


def uniforms(seed, a, b, c, d, lane):
    """Uniform variates in ``[0, 1)`` keyed by ``(seed, a, b, c, d, lane)``."""
    h = _hash(seed, a, b, c, d, lane)
    return (h >> _S11).astype(np.float64) * _INV53


def normals(seed, a, b, c, d):
    """Standard normal variates (Box-Muller on lanes 0 and 1)."""
    u1 = 1.0 - uniforms(seed, a, b, c, d, 0)
    u2 = uniforms(seed, a, b, c, d, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


# ---------------------------------------------------------------- curve eval

def reduce_positions(x, kc):
    r = np.mod(x, kc.length)
    # np.mod may round up to exactly `length` for tiny negative inputs
    return np.where(r >= kc.length, 0.0, r)


def table_offset(r, kc):
    """Hermite-interpolated deviation ``theta(s) - scale * s`` at reduced ``r``."""
    if kc.exact:
        return np.zeros_like(r)
    u = r / kc.step
    idx = np.minimum(np.floor(u).astype(np.int64), kc.p.shape[0] - 2)
    t = u - idx
    t1 = 1.0 - t
    p0 = kc.p[idx]
    p1 = kc.p[idx + 1]
    m0 = kc.dp[idx] * kc.step
    m1 = kc.dp[idx + 1] * kc.step
    return ((1.0 + 2.0 * t) * t1 * t1 * p0 + t * t1 * t1 * m0
            + t * t * (3.0 - 2.0 * t) * p1 + t * t * (t - 1.0) * m1)


def theta_of(x, kc):
    """Original curve parameter of arc-length positions ``x`` (reduced mod l)."""
    r = reduce_positions(np.asarray(x, dtype=np.float64), kc)
    return r * kc.scale + table_offset(r, kc)


def fourier_eval(theta, kc, order=1):
    """Evaluate ``gamma_0`` and its first ``order`` theta-derivatives."""
    theta = np.asarray(theta, dtype=np.float64)
    phase = np.exp(1j * np.multiply.outer(theta, kc.ks.astype(np.float64)))
    out = [phase @ kc.cs]
    ik = 1j * kc.ks
    coef = kc.cs
    for _ in range(order):
        coef = coef * ik
        out.append(phase @ coef)
    return out


def frames(X, kc):
    """Reduced theta, curve points and unit tangents for a batch of positions."""
    theta = theta_of(X, kc)
    z, dz = fourier_eval(theta, kc, 1)
    return theta, z, dz / np.abs(dz)


def _chords_from(theta_i, p_i, x_i, theta_j, p_j, x_j, kc):
    d = (x_i - x_j) * kc.scale + (p_i - p_j)
    d = d - TWO_PI * np.round(d / TWO_PI)
    m = theta_j + 0.5 * d
    acc = np.zeros(np.broadcast(d, m).shape, dtype=np.complex128)
    for k, c in zip(kc.ks, kc.cs):
        acc += c * (2j * np.sin(0.5 * k * d)) * np.exp(1j * k * m)
    return acc


def chord_matrix(X, kc):
    """Pairwise chords ``C[..., i, j] = gamma(x_i) - gamma(x_j)`` and tangents."""
    X = np.asarray(X, dtype=np.float64)
    r = reduce_positions(X, kc)
    p = table_offset(r, kc)
    theta = r * kc.scale + p
    C = _chords_from(theta[..., :, None], p[..., :, None], X[..., :, None],
                     theta[..., None, :], p[..., None, :], X[..., None, :], kc)
    _, dz = fourier_eval(theta, kc, 1)
    return C, dz / np.abs(dz)


def drift_batch(X, coef, kc):
    """``coef * sum_{j != i} Re(tau_i / chord_ij)`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[-1]
    if n < 2:
        return np.zeros_like(X)
    C, tau = chord_matrix(X, kc)
    idx = np.arange(n)
    C[..., idx, idx] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (tau[..., :, None] / C).real
    terms[..., idx, idx] = 0.0
    return coef * terms.sum(axis=-1)


def energy_batch(X, kc):
    """``-sum_{i<j} log|chord_ij|``; ``+inf`` when a chord underflows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[-1]
    if n < 2:
        return np.zeros(X.shape[0])
    C, _ = chord_matrix(X, kc)
    iu, ju = np.triu_indices(n, 1)
    a = np.abs(C[..., iu, ju])
    with np.errstate(divide="ignore"):
        out = -np.log(np.where(a < TINY_CHORD, 0.0, a)).sum(axis=-1)
    return out


def min_gaps(X, length):
    """Smallest cyclic gap of each row (negative or zero means out of D)."""
    X = np.atleast_2d(X)
    if X.shape[-1] == 1:
        return np.full(X.shape[0], length)
    inner = np.diff(X, axis=-1).min(axis=-1)
    wrap = X[:, 0] + length - X[:, -1]
    return np.minimum(inner, wrap)


def quotient_rows(X, length):
    """Shift each row by a multiple of ``length`` so that ``0 <= x_1 < length``."""
    shift = X[:, 0] - np.mod(X[:, 0], length)
    X = X - shift[:, None]
    low = X[:, 0] < 0.0
    X[low] += length
    high = X[:, 0] >= length
    X[high] -= length
    return X


# ---------------------------------------------------------------- SDE loop

def _increment(x, coef, noise, dt, policy, kc, seed, traj, step, node):
    b = drift_batch(x[None, :], coef, kc)[0]
    xi = normals(seed ^ SDE_SALT, traj, step, node, np.arange(x.shape[0]))
    if policy == 1:
        b = b / (1.0 + dt * math.sqrt(float(b @ b)))
    return x + b * dt + noise * math.sqrt(dt) * xi


def _advance_one(x, coef, noise, dt, depth, node, policy, max_halvings, kc,
                 seed, traj, step):
    """Cover one interval of length ``dt`` from ``x``; None when halvings run out.

    Each subdivision level re-draws noise keyed by the heap index ``node``.
    """
    y = _increment(x, coef, noise, dt, policy, kc, seed, traj, step, node)
    g = min_gaps(y[None, :], kc.length)[0]
    if g > 0.0:
        return y, g
    if depth >= max_halvings:
        return None, g
    half = 0.5 * dt
    y, g = _advance_one(x, coef, noise, half, depth + 1, 2 * node, policy,
                        max_halvings, kc, seed, traj, step)
    if y is None:
        return None, g
    return _advance_one(y, coef, noise, half, depth + 1, 2 * node + 1, policy,
                        max_halvings, kc, seed, traj, step)


def em_run(X0, coef, noise, dt, record_steps, seed, stream_offset, policy,
           max_halvings, kc):
    """Euler-Maruyama for ``dX = coef * S(X) dt + noise * dB``.

    ``S`` is the pairwise chord sum of ``drift_batch``. Rows advance
    independently; the noise of row ``m`` at step ``k`` is keyed by
    ``(seed, stream_offset + m, k, node, particle)``.

    Returns ``(records, fail_step, fail_gap)`` with ``records`` of shape
    ``(len(record_steps), M, N)``. A failed row keeps its last state and has
    ``fail_step >= 0``.
    """
    X = quotient_rows(np.array(X0, dtype=np.float64, copy=True), kc.length)
    M, N = X.shape
    record_steps = np.asarray(record_steps, dtype=np.int64)
    records = np.empty((record_steps.shape[0], M, N))
    fail_step = np.full(M, -1, dtype=np.int64)
    fail_gap = np.full(M, np.nan)
    alive = np.ones(M, dtype=bool)
    streams = np.arange(M, dtype=np.int64) + stream_offset
    particles = np.arange(N)
    sqdt = math.sqrt(dt)
    n_steps = int(record_steps[-1])
    rec = 0
    if record_steps[0] == 0:
        records[0] = X
        rec = 1
    for step in range(1, n_steps + 1):
        idx = np.nonzero(alive)[0]
        if idx.size:
            x = X[idx]
            b = drift_batch(x, coef, kc)
            if policy == 1:
                b = b / (1.0 + dt * np.sqrt((b * b).sum(axis=1)))[:, None]
            xi = normals(seed ^ SDE_SALT, streams[idx][:, None], step, 1,
                         particles[None, :])
            y = x + b * dt + noise * sqdt * xi
            gaps = min_gaps(y, kc.length)
            for pos in np.nonzero(~(gaps > 0.0))[0]:
                m = idx[pos]
                z, g = _advance_one(X[m], coef, noise, dt, 0, 1, policy,
                                    max_halvings, kc, seed, int(streams[m]), step)
                if z is None:
                    alive[m] = False
                    fail_step[m] = step
                    fail_gap[m] = g
                    y[pos] = X[m]
                else:
                    y[pos] = z
            X[idx] = quotient_rows(y, kc.length)
        if rec < record_steps.shape[0] and record_steps[rec] == step:
            records[rec] = X
            rec += 1
    return records, fail_step, fail_gap


# ---------------------------------------------------------------- Metropolis

def _row_log_chords(xk, X, k, kc):
    """``log|gamma(xk_c) - gamma(X[c, j])|`` for all chains ``c`` and ``j != k``."""
    M, N = X.shape
    others = np.delete(np.arange(N), k)
    xo = X[:, others]
    r_o = reduce_positions(xo, kc)
    p_o = table_offset(r_o, kc)
    th_o = r_o * kc.scale + p_o
    r_k = reduce_positions(xk, kc)
    p_k = table_offset(r_k, kc)
    th_k = r_k * kc.scale + p_k
    C = _chords_from(th_k[:, None], p_k[:, None], xk[:, None], th_o, p_o, xo, kc)
    a = np.abs(C)
    with np.errstate(divide="ignore"):
        return np.log(np.where(a < TINY_CHORD, 0.0, a))


def mcmc_run(X0, beta, scales, n_sweeps, thin, seed, stream_offset,
             sweep_offset, kc):
    """Single-site random-walk Metropolis on the cylinder, chains in lockstep.

    One sweep proposes a move for each site in order. A state is recorded
    after every ``thin``-th sweep. Proposals leaving the cyclic order have
    zero target density and are rejected.

    Returns ``(records, X_final, accepted)``; ``accepted`` counts accepted
    proposals per chain.
    """
    X = quotient_rows(np.array(X0, dtype=np.float64, copy=True), kc.length)
    C, N = X.shape
    length = kc.length
    scales = np.asarray(scales, dtype=np.float64)
    n_rec = n_sweeps // thin
    records = np.empty((n_rec, C, N))
    accepted = np.zeros(C, dtype=np.int64)
    chains = np.arange(C, dtype=np.int64) + stream_offset
    rec = 0
    for sweep in range(n_sweeps):
        key_sweep = sweep_offset + sweep
        for k in range(N):
            xi = normals(seed ^ MCMC_SALT, chains, key_sweep, k, 0)
            u = uniforms(seed ^ MCMC_SALT, chains, key_sweep, k, 1, 2)
            xk_old = X[:, k]
            xk_new = xk_old + scales * xi
            if N == 1:
                ok = np.ones(C, dtype=bool)
            else:
                lower = X[:, k - 1] if k > 0 else X[:, N - 1] - length
                upper = X[:, k + 1] if k < N - 1 else X[:, 0] + length
                ok = (xk_new > lower) & (xk_new < upper)
            if N > 1 and ok.any():
                with np.errstate(invalid="ignore"):
                    delta = beta * (_row_log_chords(xk_new, X, k, kc).sum(axis=1)
                                    - _row_log_chords(xk_old, X, k, kc).sum(axis=1))
                with np.errstate(divide="ignore"):
                    ok &= np.log(u) < delta
            X[ok, k] = xk_new[ok]
            accepted += ok
            if k == 0 and ok.any():
                X = quotient_rows(X, length)
        if (sweep + 1) % thin == 0 and rec < n_rec:
            records[rec] = X
            rec += 1
    return records, X, accepted
