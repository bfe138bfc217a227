"""Brute-force reference by exhaustive path enumeration (small instances only)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .alignment import StatePath
from .model import HmmModel, check_loss

MAX_PATHS = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EnumeratedPosterior:
    paths: np.ndarray  # |S|^n x n, lexicographic order
    log_joint: np.ndarray
    log_evidence: float
    marginals: np.ndarray

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_joint - self.log_evidence)


def _all_paths(S: int, n: int) -> np.ndarray:
    if S**n > MAX_PATHS:
        raise InstanceTooLarge(f"{S}^{n} = {S**n} paths exceeds the guard of {MAX_PATHS}")
    return np.array(list(itertools.product(range(S), repeat=n)), dtype=np.int64).reshape(-1, n)


def enumerate_posterior(model: HmmModel, x) -> EnumeratedPosterior:
    """Joint of every path from the pi/P/f factorization; evidence and marginals by summation."""
    x = np.asarray(x)
    n = len(x)
    S = model.num_states
    paths = _all_paths(S, n)
    pi = model.initial_distribution
    P = model.transition
    F = model.emission_density(x)  # n x S
    joint = pi[paths[:, 0]] * F[0, paths[:, 0]]
    for t in range(1, n):
        joint = joint * P[paths[:, t - 1], paths[:, t]] * F[t, paths[:, t]]
    evidence = joint.sum()
    with np.errstate(divide="ignore"):
        log_joint = np.log(joint)
    marginals = np.zeros((n, S))
    for t in range(n):
        np.add.at(marginals[t], paths[:, t], joint)
    if evidence > 0:
        marginals /= evidence
    return EnumeratedPosterior(paths, log_joint, float(math.log(evidence)) if evidence > 0 else -math.inf, marginals)


def path_objectives(model: HmmModel, x, enum: EnumeratedPosterior, loss=None) -> dict[str, np.ndarray]:
    """Per-path R_1, R̄_1, R̄_inf and ln p(x, s), straight from their definitions."""
    loss = check_loss(loss, model.num_states)
    n = enum.paths.shape[1]
    marg = enum.marginals
    t_idx = np.arange(n)[None, :]
    p_at = marg[t_idx, enum.paths]  # p_t(s_t | x)
    r1 = (marg @ loss)[t_idx, enum.paths].mean(axis=1)
    with np.errstate(divide="ignore"):
        rbar1 = -np.log(p_at).mean(axis=1)
    rbar_inf = -(enum.log_joint - enum.log_evidence) / n
    return {"r1": r1, "rbar1": rbar1, "rbar_inf": rbar_inf, "log_joint": enum.log_joint}


def brute_best(model: HmmModel, x, objective: str, c: float = 0.0, loss=None) -> tuple[StatePath, float]:
    """Exact optimizer by scanning all paths in lexicographic order (first optimum wins).

    Values: ``viterbi`` -> max ln p(x, s); ``pmap`` -> min R̄_1;
    ``hybrid_logR1`` -> min R̄_1 + c R̄_inf; ``hybrid_R1`` -> min R_1 + c R̄_inf.
    """
    enum = enumerate_posterior(model, x)
    obj = path_objectives(model, x, enum, loss)
    with np.errstate(invalid="ignore"):
        if objective == "viterbi":
            score = obj["log_joint"]
        elif objective == "pmap":
            score = -obj["rbar1"]
        elif objective == "hybrid_logR1":
            score = -(obj["rbar1"] + c * obj["rbar_inf"]) if c > 0 else -obj["rbar1"]
        elif objective == "hybrid_R1":
            score = -(obj["r1"] + c * obj["rbar_inf"]) if c > 0 else -obj["r1"]
        else:
            raise ValueError(f"unknown objective {objective!r}")
    score = np.where(np.isnan(score), -np.inf, score)
    k = int(np.argmax(score))
    value = float(score[k]) if objective == "viterbi" else float(-score[k])
    kind = objective if objective in ("viterbi", "pmap") else f"{objective}({c:g})"
    return StatePath(enum.paths[k].copy(), kind, float(enum.log_joint[k])), value
