import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_config
from curvegas.coulomb import (Configuration, InverseTemperature, cyclic_gaps, discriminant,
                              drift, energy, grad_energy, log_density_unnormalized,
                              log_discriminant)
from curvegas.curves import CurveSpec, build_arclength_curve
from curvegas.errors import ConfigError, DegenerateConfiguration, DomainViolation

PI = math.pi


def _cot_drift(x, beta):
    d = x[:, None] - x[None, :]
    with np.errstate(divide="ignore"):
        cot = np.where(np.eye(len(x), dtype=bool), 0.0, 0.5 / np.tan(0.5 * d))
    return 0.5 * beta * cot.sum(axis=1)


def test_energy_examples(circle, backend):
    assert energy(circle, [0.0, PI]) == pytest.approx(-math.log(2.0), abs=1e-15)
    assert energy(circle, [0.0, PI / 2]) == pytest.approx(-math.log(math.sqrt(2.0)), abs=1e-15)
    assert energy(circle, 2 * PI * np.arange(3) / 3) == pytest.approx(-1.5 * math.log(3.0),
                                                                     abs=1e-14)


def test_log_density_examples(circle, backend):
    assert log_density_unnormalized(circle, [0.0, PI], 2.0) == pytest.approx(2 * math.log(2))
    eq3 = 2 * PI * np.arange(3) / 3
    assert log_density_unnormalized(circle, eq3, 2.0) == pytest.approx(3 * math.log(3))


def test_drift_examples(circle, backend):
    np.testing.assert_array_equal(drift(circle, [1.3], 2.0), [0.0])
    np.testing.assert_allclose(drift(circle, [0.0, PI], 2.0), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(drift(circle, [0.0, PI / 2], 2.0), [-0.5, 0.5], atol=1e-15)


def test_discriminant_examples():
    assert discriminant([1.0, -1.0]) == pytest.approx(4.0)
    for N in (3, 4, 7, 12):
        z = np.exp(2j * PI * np.arange(N) / N)
        assert discriminant(z) == pytest.approx(float(N) ** N, rel=1e-12)
        assert log_discriminant(z) == pytest.approx(N * math.log(N), rel=1e-12)
    with pytest.raises(DegenerateConfiguration):
        discriminant([1.0, 1.0])


def test_circle_drift_closed_form(circle, backend, rng):
    for _ in range(200):
        N = int(rng.integers(2, 9))
        x = random_config(rng, N, 2 * PI, min_gap=1e-6)
        beta = float(rng.uniform(1.0, 6.0))
        np.testing.assert_allclose(drift(circle, x, beta), _cot_drift(x, beta), rtol=1e-13,
                                   atol=1e-12)


def test_circle_drift_within_ulps_of_exact(circle, backend, rng):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    for _ in range(30):
        N = int(rng.integers(2, 9))
        x = random_config(rng, N, 2 * PI, min_gap=1e-7)
        got = drift(circle, x, 2.0)
        terms = [[0.5 * mpmath.cot((mpmath.mpf(x[i]) - mpmath.mpf(x[j])) / 2)
                  for j in range(N) if j != i] for i in range(N)]
        exact = np.array([float(sum(t)) for t in terms])
        # attainable accuracy: rounding of the summands and of the positions
        scale = max(float(sum(abs(v) for v in t)) for t in terms)
        d = x[:, None] - x[None, :] + np.eye(N)
        slope = (0.25 / np.sin(0.5 * d) ** 2 * (1 - np.eye(N))).sum(axis=1).max()
        bound = 8 * (np.spacing(scale) + np.spacing(2 * PI) * slope)
        assert np.all(np.abs(got - exact) <= bound)


@pytest.mark.parametrize("name", ["circle", "ellipse"])
def test_gradient_matches_finite_differences(name, request, backend, rng):
    c = request.getfixturevalue(name)
    h = 1e-6
    for _ in range(20):
        N = int(rng.integers(2, 7))
        x = random_config(rng, N, c.length, min_gap=0.05)
        fd = np.array([(energy(c, x + h * e) - energy(c, x - h * e)) / (2 * h)
                       for e in np.eye(N)])
        beta = 2.0
        g = -(2.0 / beta) * drift(c, x, beta)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(grad_energy(c, x), g, rtol=1e-14, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.floats(-20.0, 20.0), st.integers(0, 2 ** 32 - 1))
def test_circle_rotation_invariance_and_zero_sum(N, shift, seed):
    c = build_arclength_curve(CurveSpec.circle(1.0))
    x = random_config(np.random.default_rng(seed), N, 2 * PI, min_gap=1e-3)
    b = drift(c, x, 2.0)
    np.testing.assert_allclose(drift(c, x + shift, 2.0), b, atol=1e-10)
    assert abs(b.sum()) < 1e-10 * max(1.0, np.abs(b).max())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.floats(0.5, 8.0), st.integers(0, 2 ** 32 - 1))
def test_log_density_is_minus_beta_energy(N, beta, seed):
    c = build_arclength_curve(CurveSpec.ellipse(2.0, 1.0))
    x = random_config(np.random.default_rng(seed), N, c.length, min_gap=1e-4)
    assert log_density_unnormalized(c, x, beta) == -beta * energy(c, x)


@pytest.mark.parametrize("name", ["circle", "ellipse"])
def test_drift_blows_up_apart_as_gap_closes(name, request, backend):
    c = request.getfixturevalue(name)
    l = c.length
    base = np.array([0.1, 0.35, 0.6, 0.85]) * l
    prev = -np.inf
    for eps in 10.0 ** -np.arange(1, 12):
        x = base.copy()
        x[2] = x[1] + eps
        b = drift(c, x, 2.0)
        push = b[2] - b[1]
        assert push > prev
        prev = push
    assert prev > 1e10


def test_energy_is_infinite_when_chords_underflow(circle, backend):
    x = np.array([1.0, np.nextafter(1.0, 2.0)])
    assert energy(circle, x) > 30
    # chords below 1e-300 report +inf rather than a NaN
    tiny = build_arclength_curve(CurveSpec.circle(1e-200))
    y = np.array([0.0, 1e-110 * 2 * PI])
    assert energy(tiny, y) == math.inf


def test_coincident_particles_rejected(circle):
    with pytest.raises(DegenerateConfiguration):
        energy(circle, [0.5, 0.5])
    with pytest.raises(DegenerateConfiguration):
        drift(circle, [0.5, 0.5 + 2 * PI], 2.0)


def test_configuration_invariants():
    c = Configuration([0.0, 1.0, 2.0], 2 * PI)
    assert c.n == 3 and len(c) == 3
    with pytest.raises(ValueError):
        c.positions[0] = 1.0
    with pytest.raises(DomainViolation):
        Configuration([1.0, 0.5], 2 * PI)
    with pytest.raises(DomainViolation):
        Configuration([0.0, 7.0], 2 * PI)
    with pytest.raises(DomainViolation):
        Configuration([-0.1, 1.0], 2 * PI)
    with pytest.raises(DegenerateConfiguration):
        Configuration([0.0, 1.0, 1.0], 2 * PI)


def test_cyclic_gaps_sum_to_length(rng):
    x = np.sort(rng.uniform(0, 5.0, (10, 6)), axis=1)
    np.testing.assert_allclose(cyclic_gaps(x, 5.0).sum(axis=1), 5.0)


def test_inverse_temperature():
    t = InverseTemperature.from_beta(4.0)
    assert t.kappa * t.beta == 2.0
    assert InverseTemperature.from_kappa(0.5) == t
    assert InverseTemperature.from_kappa(0.0).beta == math.inf
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(ConfigError):
            InverseTemperature.from_beta(bad)
    with pytest.raises(ConfigError):
        InverseTemperature.from_kappa(-0.1)
