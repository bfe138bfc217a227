import json
import math

import numpy as np
import pytest

from segrisk.alignment import pmap, viterbi
from segrisk.inference import forward_backward
from segrisk.model import Categorical, HmmModel, sample
from segrisk.oracle import enumerate_posterior, path_objectives
from segrisk.risk import RiskReport, empirical_r1, evaluate_risks


def test_m2_risks(m2):
    post = forward_backward(m2, [0, 0])
    rep = evaluate_risks(m2, [0, 0], post, [0, 0], c_grid=[0.0, 2.0])
    assert rep.r1 == pytest.approx(1 - 0.4 / 0.44, abs=1e-12)
    assert rep.r1 == pytest.approx(0.0909, abs=1e-4)
    assert rep.rbar1 == pytest.approx(0.0953, abs=1e-4)
    assert rep.rbar_inf == pytest.approx(-0.5 * math.log(0.384 / 0.44), abs=1e-12)
    assert rep.rbar_inf == pytest.approx(0.0681, abs=1e-4)
    assert rep.rbar_c[0.0] == rep.rbar1
    assert rep.rbar_c[2.0] == pytest.approx(rep.rbar1 + 2 * rep.rbar_inf, abs=1e-15)


def test_identity_model_risks_vanish(mid):
    x = sample(mid, 400, 2).x
    post = forward_backward(mid, x)
    rep = evaluate_risks(mid, x, post, x, c_grid=[1.0], truth=x)
    assert (rep.r1, rep.rbar1, rep.rbar_inf, rep.empirical_r1) == (0.0, 0.0, 0.0, 0.0)


def test_empirical_r1():
    assert empirical_r1([0, 1, 0], [0, 1, 0]) == 0
    assert empirical_r1([0, 1, 0], [1, 1, 0]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        empirical_r1([0, 1], [0, 1, 0])


def test_bad_paths(m2):
    post = forward_backward(m2, [0, 1])
    with pytest.raises(ValueError):
        evaluate_risks(m2, [0, 1], post, [0])
    with pytest.raises(ValueError):
        evaluate_risks(m2, [0, 1], post, [0, 2])


def test_infinite_risks_are_flagged():
    model = HmmModel(np.array([[0.5, 0.5], [0.0, 1.0]]) * 0 + np.array([[0.9, 0.1], [0.2, 0.8]]),
                     Categorical(np.array([[1.0, 0.0], [0.5, 0.5]])))
    post = forward_backward(model, [1, 1])
    rep = evaluate_risks(model, [1, 1], post, [0, 1], c_grid=[1.0])
    assert math.isinf(rep.rbar1) and math.isinf(rep.rbar_inf)
    d = rep.to_dict()
    assert d["rbar1"] is None and "rbar1" in d["infinite"]
    assert RiskReport.from_dict(json.loads(json.dumps(d))) == rep


def test_report_roundtrip(m2):
    x = sample(m2, 50, 1)
    post = forward_backward(m2, x.x)
    rep = evaluate_risks(m2, x.x, post, viterbi(m2, x.x), c_grid=[0.0, 0.5, 3.0], truth=x.y)
    assert RiskReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


def test_tower_property_exact(small_instances):
    for model, x in small_instances[:100]:
        post = forward_backward(model, x)
        enum = enumerate_posterior(model, x)
        obj = path_objectives(model, x, enum)
        posterior = enum.posterior
        for k in (0, len(enum.paths) // 2, len(enum.paths) - 1):
            s = enum.paths[k]
            # sum over a^n of L_1(a^n, s^n) p(a^n | x^n)
            direct = float(((enum.paths != s).mean(axis=1) * posterior).sum())
            assert evaluate_risks(model, x, post, s).r1 == pytest.approx(direct, abs=1e-9)
            assert obj["r1"][k] == pytest.approx(direct, abs=1e-9)


def test_tower_property_by_posterior_sampling(m2):
    x = sample(m2, 10, 4).x
    post = forward_backward(m2, x)
    enum = enumerate_posterior(m2, x)
    s = viterbi(m2, x).states
    r1 = evaluate_risks(m2, x, post, s).r1
    rng = np.random.default_rng(1)
    draws = enum.paths[rng.choice(len(enum.paths), size=10**4, p=enum.posterior / enum.posterior.sum())]
    losses = (draws != s).mean(axis=1)
    se = losses.std(ddof=1) / math.sqrt(len(losses))
    assert abs(losses.mean() - r1) < 3 * se


def test_dominance_relations(small_instances):
    for model, x in small_instances:
        post = forward_backward(model, x)
        v = viterbi(model, x)
        u = pmap(post)
        rv = evaluate_risks(model, x, post, v)
        ru = evaluate_risks(model, x, post, u)
        assert ru.rbar1 <= rv.rbar1 + 1e-12
        assert rv.rbar_inf <= ru.rbar_inf + 1e-12
        enum = enumerate_posterior(model, x)
        obj = path_objectives(model, x, enum)
        assert ru.r1 <= obj["r1"].min() + 1e-9
        assert rv.rbar_inf <= obj["rbar_inf"].min() + 1e-9
