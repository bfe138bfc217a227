import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segrisk.model import (
    Categorical,
    Gaussian,
    HmmModel,
    ModelValidationError,
    expected_log_emission,
    markov_entropy_rate,
    model_diagnostics,
    model_from_dict,
    sample,
    stationary_distribution,
    validate_model,
)

from conftest import gaussian_model


def test_m2_is_valid(m2):
    assert validate_model(m2) is m2
    assert model_diagnostics(m2) == []


def test_identity_transition_is_reducible():
    model = HmmModel(np.eye(2), Categorical(np.array([[0.5, 0.5], [0.5, 0.5]])))
    with pytest.raises(ModelValidationError) as err:
        validate_model(model)
    assert "reducible" in str(err.value)


def test_periodic_chain_rejected():
    model = HmmModel(np.array([[0.0, 1.0], [1.0, 0.0]]), Categorical(np.full((2, 2), 0.5)))
    with pytest.raises(ModelValidationError, match="periodic"):
        validate_model(model)
    assert model_diagnostics(model, require_ergodic=False) == []


def test_bad_emission_row_reports_sum():
    model = HmmModel(np.array([[0.9, 0.1], [0.2, 0.8]]), Categorical(np.array([[0.5, 0.6], [0.3, 0.7]])))
    issues = model_diagnostics(model)
    assert issues == ["emission row 0: row sum 1.1"]


def test_gaussian_std_must_be_positive():
    model = HmmModel(np.array([[0.9, 0.1], [0.2, 0.8]]), Gaussian(np.zeros(2), np.array([1.0, 0.0])))
    with pytest.raises(ModelValidationError, match="stds"):
        validate_model(model)


def test_model_json_roundtrip(m2):
    again = model_from_dict(m2.to_dict())
    assert again.to_dict() == m2.to_dict()
    assert again.model_id() == m2.model_id()


@pytest.mark.parametrize(
    "P, expected",
    [
        ([[0.9, 0.1], [0.2, 0.8]], [2 / 3, 1 / 3]),
        ([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]),
        ([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5]),
    ],
)
def test_stationary_distribution(P, expected):
    pi = stationary_distribution(P)
    np.testing.assert_allclose(pi, expected, atol=1e-14)
    assert np.abs(pi @ np.array(P) - pi).max() < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_stationary_invariant_under_transition(S, seed):
    P = np.random.default_rng(seed).dirichlet(np.ones(S), size=S)
    pi = stationary_distribution(P)
    assert np.all(pi > 0)
    assert np.abs(pi @ P - pi).max() < 1e-12
    assert abs(pi.sum() - 1) < 1e-12


def test_sample_is_deterministic(m2):
    a, b = sample(m2, 5, 7), sample(m2, 5, 7)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert sample(m2, 50, 8).x.tobytes() != sample(m2, 50, 7).x.tobytes()


def test_identity_emission_exposes_states(mid):
    smp = sample(mid, 1000, 3)
    np.testing.assert_array_equal(smp.x, smp.y)


def test_sample_rejects_empty(m2):
    with pytest.raises(ValueError):
        sample(m2, 0, 1)


def test_long_run_state_frequency(m2):
    smp = sample(m2, 10**6, 1)
    assert abs(np.mean(smp.y == 0) - 2 / 3) < 0.01


def test_emission_frequencies_converge(m2):
    smp = sample(m2, 10**5, 11)
    for s in range(2):
        freq = np.bincount(smp.x[smp.y == s], minlength=2) / np.sum(smp.y == s)
        assert np.abs(freq - m2.emission.probs[s]).max() < 0.02


def test_gaussian_sampling_moments():
    model = gaussian_model()
    smp = sample(model, 10**5, 5)
    for s in range(2):
        xs = smp.x[smp.y == s]
        assert abs(xs.mean() - model.emission.means[s]) < 0.03
        assert abs(xs.std() - model.emission.stds[s]) < 0.03


def test_markov_entropy_rate_m2(m2):
    # closed form with pi = (2/3, 1/3)
    h = lambda p: -sum(q * math.log(q) for q in p)
    expected = 2 / 3 * h([0.9, 0.1]) + 1 / 3 * h([0.2, 0.8])
    assert markov_entropy_rate(m2) == pytest.approx(expected, abs=1e-14)
    assert markov_entropy_rate(m2) == pytest.approx(0.38352, abs=1e-4)


def test_markov_entropy_rate_extremes():
    assert markov_entropy_rate(np.array([[0.0, 1.0], [1.0, 0.0]])) == 0.0
    assert markov_entropy_rate(np.full((3, 3), 1 / 3)) == pytest.approx(math.log(3), abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_markov_entropy_rate_bounds(S, seed):
    P = np.random.default_rng(seed).dirichlet(np.full(S, 0.5), size=S)
    h = markov_entropy_rate(P)
    assert -1e-15 <= h <= math.log(S) + 1e-12


def test_expected_log_emission(m2):
    assert expected_log_emission(m2, 0) == pytest.approx(0.8 * math.log(0.8) + 0.2 * math.log(0.2), abs=1e-15)
    assert expected_log_emission(m2, 0) == pytest.approx(-0.5004, abs=1e-4)
    assert expected_log_emission(m2, 1) == pytest.approx(-0.6109, abs=1e-4)
    g = HmmModel(np.array([[0.9, 0.1], [0.2, 0.8]]), Gaussian(np.zeros(2), np.ones(2)))
    assert expected_log_emission(g, 0) == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, abs=1e-15)
    assert expected_log_emission(g, 0) == pytest.approx(-1.4189, abs=1e-4)


def test_expected_log_emission_gaussian_by_quadrature():
    model = gaussian_model()
    grid = np.linspace(-20, 20, 400001)
    for s in range(2):
        logf = model.log_emission(grid)[:, s]
        integrand = np.exp(logf) * logf
        assert np.trapezoid(integrand, grid) == pytest.approx(expected_log_emission(model, s), abs=1e-8)
