import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import random_config
from curvegas.coulomb import cyclic_gaps, discriminant, energy
from curvegas.curves import CurveSpec, build_arclength_curve
from curvegas.errors import ConfigError, SupportViolation
from curvegas.gibbs import (ConstantFunction, GapBump, SampleBatch, _log_target,
                            generator_values, log_acceptance, mcmc_step, sample_stationary,
                            split_rhat, stationarity_residual)
from curvegas import _kernels_py

PI = math.pi
# E[V] for N=2 on the (2, 1) ellipse at beta=2, by 8192^2-point periodic
# trapezoid quadrature in the ellipse angle (converged to ~1e-11)
ELLIPSE_N2_MEAN_ENERGY = -0.93956899627


@pytest.fixture(scope="module")
def circle_n2():
    c = build_arclength_curve(CurveSpec.circle(1.0))
    return sample_stationary(c, 2.0, 2, 100_000, burn_in=500, thin=2, seed=11, n_chains=4)


def test_batch_shape_and_invariants(circle_n2):
    b = circle_n2
    assert len(b) == 100_000 and b.samples.shape == (100_000, 2)
    g = cyclic_gaps(b.samples, b.curve.length)
    assert g.min() > 0
    assert b.samples[:, 0].min() >= 0 and b.samples[:, 0].max() < b.curve.length
    assert 0.1 <= b.acceptance_rate <= 0.7
    assert sorted(set(b.chains)) == [0, 1, 2, 3]
    assert len(b.configurations()) == len(b)


def test_two_particle_gap_law(circle_n2):
    # gap density (1 - cos g) / (2 pi) on (0, 2 pi)
    g = cyclic_gaps(circle_n2.samples, 2 * PI)[:, 0]
    ks = stats.kstest(g, lambda t: (t - np.sin(t)) / (2 * PI)).statistic
    assert ks <= 0.01


def test_first_coordinate_uniform(circle_n2):
    ks = stats.kstest(circle_n2.samples[:, 0] / (2 * PI), "uniform").statistic
    assert ks <= 0.01


def test_chains_agree(circle_n2):
    gaps = cyclic_gaps(circle_n2.samples, 2 * PI)[:, 0]
    assert split_rhat(circle_n2.by_chain(gaps)) < 1.01


def test_three_particle_discriminant_bounded(circle):
    b = sample_stationary(circle, 2.0, 3, 20_000, burn_in=300, seed=3)
    delta = np.array([discriminant(circle.point(x)) for x in b.samples[::10]])
    assert delta.max() <= 27 * (1 + 1e-12)
    assert delta.mean() <= 27


def test_ellipse_two_particle_mean_energy(ellipse):
    b = sample_stationary(ellipse, 2.0, 2, 100_000, burn_in=500, thin=2, seed=5)
    from curvegas import _backend
    V = _backend.kernels.energy_batch(b.samples, ellipse.kernel)
    from curvegas.gibbs import batch_means_stderr
    se = batch_means_stderr(b.by_chain(V))
    assert abs(V.mean() - ELLIPSE_N2_MEAN_ENERGY) <= 3 * se


def test_deterministic_and_thread_independent(ellipse):
    a = sample_stationary(ellipse, 3.0, 4, 400, burn_in=60, seed=9, threads=1)
    b = sample_stationary(ellipse, 3.0, 4, 400, burn_in=60, seed=9, threads=3)
    np.testing.assert_array_equal(a.samples, b.samples)
    c = sample_stationary(ellipse, 3.0, 4, 400, burn_in=60, seed=10)
    assert not np.array_equal(a.samples, c.samples)


def test_sampler_arguments(circle):
    with pytest.raises(ConfigError):
        sample_stationary(circle, 0.0, 2, 10)
    with pytest.raises(ConfigError):
        sample_stationary(circle, 2.0, 0, 10)
    b = sample_stationary(circle, 0.5, 3, 100, burn_in=0, n_chains=2,
                          initial=[[0.0, 1.0, 2.0], [7.0, 8.0, 9.0]])
    assert len(b) == 100


# ---------------------------------------------------------------- single steps

def test_step_matches_sampler(ellipse):
    x0 = np.array([[0.0, 1.0, 3.0]])
    from curvegas import _backend
    rec, X, acc = _backend.kernels.mcmc_run(x0, 2.0, np.array([0.7]), 3, 1, 4, 0, 0,
                                            ellipse.kernel)
    state = x0[0]
    n_acc = 0
    for sweep in range(3):
        for site in range(3):
            state, ok = mcmc_step(ellipse, state, 2.0, 0.7, seed=4, chain=0, sweep=sweep,
                                  site=site)
            n_acc += ok
        np.testing.assert_allclose(state.positions, rec[sweep, 0], rtol=1e-13, atol=1e-13)
    assert n_acc == acc[0]


def test_collision_proposals_rejected(circle):
    x = np.array([0.0, 1.0, 2.0])
    assert log_acceptance(circle, x, np.array([0.0, 2.0, 2.0]), 2.0) == -math.inf
    assert log_acceptance(circle, x, np.array([0.0, 2.5, 2.0]), 2.0) == -math.inf
    for seed in range(20):
        # a jump of many periods leaves the chamber
        new, ok = mcmc_step(circle, x, 2.0, 1e3, seed=seed, site=1)
        assert not ok
        np.testing.assert_array_equal(new.positions, x)


def test_uphill_density_always_accepted(circle):
    x = np.array([0.0, 0.1])
    for seed in range(50):
        key = seed ^ _kernels_py.MCMC_SALT
        xi = float(_kernels_py.normals(key, 0, 0, 1, 0))
        # scale chosen so that particle 2 lands at the antipode
        new, ok = mcmc_step(circle, x, 2.0, (PI - 0.1) / xi, seed=seed, site=1)
        assert ok
        assert new.positions[1] == pytest.approx(PI)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 5), st.floats(-1.0, 1.0), st.floats(0.5, 6.0),
       st.integers(0, 2 ** 32 - 1))
def test_detailed_balance(N, site, jump, beta, seed):
    c = build_arclength_curve(CurveSpec.ellipse(2.0, 1.0))
    site = site % N
    x = random_config(np.random.default_rng(seed), N, c.length)
    y = x.copy()
    y[site] += jump
    a_xy = log_acceptance(c, x, y, beta)
    a_yx = log_acceptance(c, y, x, beta)
    if a_xy == -math.inf:
        return
    lhs = _log_target(c, x, beta) + a_xy
    rhs = _log_target(c, y, beta) + a_yx
    assert lhs == pytest.approx(rhs, abs=1e-9)
    assert max(a_xy, a_yx) == 0.0


# ---------------------------------------------------------------- stationarity

def _gap_generator_oracle(phi_fn, g, beta):
    """L phi for N=2 on the unit circle, as a function of the gap."""
    f, d1, d2 = phi_fn(g)
    return d2 + 0.5 * beta / math.tan(0.5 * g) * d1


def test_generator_matches_gap_formula(circle):
    bump = GapBump([2.0], [1.2])
    g = np.linspace(0.85, 3.15, 40)
    X = np.column_stack([np.full_like(g, 0.4), 0.4 + g])
    from curvegas.gibbs import _bump
    expected = [_gap_generator_oracle(lambda t: [v / s for v, s in zip(_bump((t - 2.0) / 1.2),
                                                                      (1, 1.2, 1.44))], t, 2.0)
                for t in g]
    np.testing.assert_allclose(generator_values(circle, X, 2.0, bump), expected, atol=1e-10)


def test_stationary_density_annihilates_generator():
    # quadrature of int L phi rho dg: zero for rho ~ sin(g/2)^beta, nonzero for uniform
    from curvegas.gibbs import _bump

    def lphi(t, beta):
        f, d1, d2 = _bump((t - 1.5) / 0.9)
        return d2 / 0.81 + 0.5 * beta / math.tan(0.5 * t) * d1 / 0.9

    stat = integrate.quad(lambda t: lphi(t, 2.0) * math.sin(0.5 * t) ** 2, 0.6, 2.4,
                          epsabs=1e-13, limit=200)[0]
    unif = integrate.quad(lambda t: lphi(t, 2.0), 0.6, 2.4, epsabs=1e-13, limit=200)[0]
    assert abs(stat) < 1e-10
    assert abs(unif) > 1e-2


# E[L phi] under the flipped-drift generator, by quadrature against the
# gap density (1 - cos g) / (2 pi)
FLIPPED = {(2.2, 0.5): -0.11082, (2.5, 0.8): -0.23398, (3.0, 1.0): -0.35108,
           (3.8, 1.3): -0.34468, (4.0, 0.7): -0.16906}


@pytest.mark.parametrize("center, width", sorted(FLIPPED))
def test_bump_residuals_within_noise(circle_n2, center, width):
    est, se = stationarity_residual(circle_n2, GapBump([center], [width]))
    assert se > 0
    assert abs(est) <= 3 * se


@pytest.mark.parametrize("center, width", sorted(FLIPPED))
def test_flipped_drift_is_detected(circle_n2, center, width):
    est, se = stationarity_residual(circle_n2, GapBump([center], [width]), drift_sign=-1.0)
    assert abs(est) > 3 * se
    assert abs(est - FLIPPED[center, width]) <= 3 * se


def test_uniform_samples_fail_residual(circle):
    rng = np.random.default_rng(0)
    x1 = rng.uniform(0, 2 * PI, 100_000)
    g = rng.uniform(0, 2 * PI, 100_000)
    X = np.column_stack([x1, x1 + g])
    batch = SampleBatch(X, np.repeat(np.arange(4), 25_000), 2.0, circle)
    est, se = stationarity_residual(batch, GapBump([1.5], [0.9]))
    assert abs(est) > 3 * se


def test_constant_function_gives_exact_zero(circle_n2):
    assert stationarity_residual(circle_n2, ConstantFunction(3.0)) == (0.0, 0.0)


def test_support_violation(circle_n2):
    with pytest.raises(SupportViolation):
        stationarity_residual(circle_n2, GapBump([0.3], [0.5]))
    with pytest.raises(SupportViolation):
        stationarity_residual(circle_n2, GapBump([5.8], [0.6]))
    with pytest.raises(ConfigError):
        GapBump([1.0], [0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
def test_bump_derivatives(N, seed):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.8, 1.2, N - 1)
    bump = GapBump(centers, 0.6)
    gaps = centers + rng.uniform(-0.45, 0.45, N - 1)
    x = np.concatenate([[0.3], 0.3 + np.cumsum(gaps)])
    phi, grad, lap = bump.evaluate(x[None, :])
    h = 1e-4
    fd_grad = np.zeros(N)
    fd_lap = 0.0
    for i in range(N):
        e = np.zeros(N)
        e[i] = h
        fp = bump.evaluate((x + e)[None, :])[0][0]
        fm = bump.evaluate((x - e)[None, :])[0][0]
        fd_grad[i] = (fp - fm) / (2 * h)
        fd_lap += (fp - 2 * phi[0] + fm) / h ** 2
    np.testing.assert_allclose(grad[0], fd_grad, rtol=1e-5, atol=1e-7)
    assert lap[0] == pytest.approx(fd_lap, rel=1e-4, abs=1e-5)
    # invariance under a rigid shift
    np.testing.assert_allclose(bump.evaluate((x + 2.7)[None, :])[0], phi, rtol=1e-12)
