"""Viterbi, PMAP and the penalized hybrid alignments.

Every decoder breaks ties toward the smallest state index at each
backtrack decision, so identical inputs always give identical paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .inference import Posteriors, ZeroLikelihoodError, run_forward
from .model import HmmModel, check_loss


@dataclass(frozen=True, eq=False)
class StatePath:
    states: np.ndarray
    kind: str
    log_joint: float

    def __len__(self) -> int:
        return len(self.states)


def log_joint(model: HmmModel, x, states, log_B=None) -> float:
    """ln p(x, s); ``-inf`` when the path uses a forbidden transition or emission."""
    log_B = model.log_emission(x) if log_B is None else log_B
    states = np.asarray(states, dtype=np.int64)
    return float(_kernels.path_terms(states, model.log_initial, model.log_transition, log_B).sum())


def viterbi_lattice(model: HmmModel, log_B):
    """Shared max-product lattice; any prefix's Viterbi path is a backtrack in it."""
    return _kernels.viterbi_lattice(model.log_initial, model.log_transition, log_B)


def viterbi_from_lattice(delta, bp, end: int) -> np.ndarray:
    last = _kernels.first_argmax(delta[end - 1])
    return _kernels.backtrack(bp, last, end)


def viterbi(model: HmmModel, x) -> StatePath:
    log_B = model.log_emission(x)
    run_forward(model, log_B)  # raises on zero-likelihood input
    delta, bp = viterbi_lattice(model, log_B)
    states = viterbi_from_lattice(delta, bp, log_B.shape[0])
    return StatePath(states, "viterbi", log_joint(model, x, states, log_B))


def pmap(posteriors: Posteriors, model: HmmModel | None = None, x=None) -> StatePath:
    """Pointwise argmax of the smoothing marginals.

    ``log_joint`` is filled in only when the model and observations are given
    (it may be ``-inf``: PMAP paths can use forbidden transitions).
    """
    states = np.argmax(posteriors.smoothing, axis=1).astype(np.int64)
    lj = log_joint(model, x, states) if model is not None else math.nan
    return StatePath(states, "pmap", lj)


def _hybrid(model, x, point, c, kind) -> StatePath:
    if c < 0 or not math.isfinite(c):
        raise ValueError(f"c must be a finite value >= 0, got {c}")
    log_B = model.log_emission(x)
    if c == 0:
        # model terms vanish; a per-step argmax avoids re-rounding through the DP sums
        states = np.argmax(point, axis=1).astype(np.int64)
    else:
        states, _ = _kernels.hybrid_dp(
            np.ascontiguousarray(point), model.log_initial, model.log_transition, log_B, float(c)
        )
    return StatePath(states, f"{kind}({c:g})", log_joint(model, x, states, log_B))


def hybrid_logR1(model: HmmModel, x, posteriors: Posteriors, c: float) -> StatePath:
    """Minimize R̄_1 + c R̄_inf, i.e. maximize sum_t ln p_t(s_t|x) + c ln p(x, s)."""
    if c == 0:
        point = posteriors.smoothing
    else:
        with np.errstate(divide="ignore"):
            point = np.log(posteriors.smoothing)
    return _hybrid(model, x, point, c, "hybrid_logR1")


def hybrid_R1(model: HmmModel, x, posteriors: Posteriors, c: float, loss=None) -> StatePath:
    """Minimize R_1 + c R̄_inf; the pointwise score is -sum_a l(a, s) p_t(a|x)."""
    if loss is None:
        point = posteriors.smoothing
    else:
        point = -(posteriors.smoothing @ check_loss(loss, model.num_states))
    return _hybrid(model, x, point, c, "hybrid_R1")


__all__ = [
    "StatePath",
    "ZeroLikelihoodError",
    "hybrid_R1",
    "hybrid_logR1",
    "log_joint",
    "pmap",
    "viterbi",
    "viterbi_from_lattice",
    "viterbi_lattice",
]
