import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segrisk.inference import (
    ZeroLikelihoodError,
    forgetting_profile,
    forgetting_study,
    forward_backward,
    mean_log_slope,
    tv_distance,
)
from segrisk.model import Categorical, HmmModel, sample
from segrisk.oracle import enumerate_posterior


def test_single_observation(m2):
    post = forward_backward(m2, [0])
    assert post.log_likelihood == pytest.approx(math.log(2 / 3 * 0.8 + 1 / 3 * 0.3), abs=1e-14)
    assert post.log_likelihood == pytest.approx(-0.45676, abs=1e-5)
    np.testing.assert_allclose(post.smoothing[0], [0.8421052631578947, 0.15789473684210525], atol=1e-12)


def test_two_observations(m2):
    post = forward_backward(m2, [0, 0])
    # brute force over 4 paths: 0.384, 0.016, 0.016, 0.024
    assert post.log_likelihood == pytest.approx(math.log(0.44), abs=1e-14)
    np.testing.assert_allclose(post.smoothing[:, 0], [0.4 / 0.44, 0.4 / 0.44], atol=1e-12)


def test_identity_model_gives_point_masses(mid):
    x = sample(mid, 300, 4).x
    post = forward_backward(mid, x)
    np.testing.assert_array_equal(post.smoothing, np.eye(2)[x])


def test_zero_likelihood_is_an_error():
    model = HmmModel(np.array([[0.9, 0.1], [0.2, 0.8]]), Categorical(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])))
    with pytest.raises(ZeroLikelihoodError) as err:
        forward_backward(model, [0, 1, 2, 0])
    assert err.value.t == 2


def test_alpha_beta_consistency(m2):
    x = sample(m2, 200, 9).x
    post = forward_backward(m2, x)
    joint = post.log_alpha + post.log_beta
    z = np.logaddexp.reduce(joint, axis=1)
    np.testing.assert_allclose(z, post.log_likelihood, rtol=0, atol=1e-9)
    np.testing.assert_allclose(np.exp(joint - z[:, None]), post.smoothing, atol=1e-9)
    np.testing.assert_allclose(post.smoothing.sum(axis=1), 1.0, atol=1e-9)


def test_no_underflow_on_long_sequences(m2):
    x = sample(m2, 10**5, 2).x
    post = forward_backward(m2, x)
    assert np.isfinite(post.log_likelihood)
    assert np.all(np.isfinite(post.smoothing))


def test_matches_enumeration(small_instances):
    for model, x in small_instances:
        post = forward_backward(model, x)
        enum = enumerate_posterior(model, x)
        np.testing.assert_allclose(post.smoothing, enum.marginals, atol=1e-9, rtol=0)
        assert post.log_likelihood == pytest.approx(enum.log_evidence, abs=1e-9)


def test_tv_distance_examples():
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert tv_distance([1, 0], [0, 1]) == 1
    assert tv_distance([0.9, 0.1], [0.8, 0.2]) == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(ValueError):
        tv_distance([1.0], [0.5, 0.5])


simplex3 = st.lists(st.floats(0.001, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / sum(v))


@settings(max_examples=200, deadline=None)
@given(simplex3, simplex3, simplex3)
def test_tv_is_a_metric(p, q, r):
    assert 0 <= tv_distance(p, q) <= 1
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p), abs=1e-15)
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
    assert tv_distance(p, p) == 0


def test_windowed_marginals_match_truncated_runs(m2):
    x = sample(m2, 60, 1).x
    t, gaps = 10, [0, 3, 7, 20]
    prof = forgetting_profile(m2, x, t, gaps)
    marg = [forward_backward(m2, x[: t + g + 1]).smoothing[t] for g in gaps]
    expected = [tv_distance(m, marg[-1]) for m in marg]
    np.testing.assert_allclose(prof.tv, expected, atol=1e-12)


def test_single_gap_profile(m2):
    prof = forgetting_profile(m2, sample(m2, 50, 1).x, 5, [4])
    assert prof.tv == [0.0]
    assert math.isnan(prof.fitted_log_slope)


def test_identity_model_forgets_nothing(mid):
    x = sample(mid, 100, 1).x
    prof = forgetting_profile(mid, x, 10, list(range(1, 41)))
    assert all(v == 0 for v in prof.tv)


def test_profile_range_checks(m2):
    x = sample(m2, 50, 1).x
    with pytest.raises(ValueError):
        forgetting_profile(m2, x, 20, list(range(1, 41)))
    with pytest.raises(ValueError):
        forgetting_profile(m2, x, 2, [3, 3])


def test_m2_forgetting_slope_negative(m2):
    x = sample(m2, 500, 17).x
    prof = forgetting_profile(m2, x, 100, list(range(1, 41)))
    assert prof.fitted_log_slope < 0
    assert all(0 <= v <= 1 for v in prof.tv)


def test_average_forgetting_decreases(m2):
    # statistical check: averaged over many anchors, tv falls with the gap
    x = sample(m2, 2000, 5).x
    gaps = list(range(1, 21))
    profiles = forgetting_study(m2, x, range(0, 1900, 15), gaps)
    assert len(profiles) >= 100
    mean_tv = np.mean([p.tv for p in profiles], axis=0)
    assert np.all(np.diff(mean_tv) <= 1e-12)
    assert mean_log_slope(profiles) < 0
