"""Segmentation risks of a path given a sequence, in nats where logarithmic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .alignment import StatePath
from .inference import Posteriors
from .model import HmmModel, check_loss

_RISK_FIELDS = ("r1", "rbar1", "rbar_inf", "empirical_r1")


@dataclass
class RiskReport:
    r1: float
    rbar1: float
    rbar_inf: float
    rbar_c: dict[float, float] = field(default_factory=dict)
    empirical_r1: Optional[float] = None

    @property
    def infinite(self) -> list[str]:
        """Names of the risks that are +inf (zero marginal or forbidden transition)."""
        names = [k for k in _RISK_FIELDS if getattr(self, k) is not None and math.isinf(getattr(self, k))]
        names += [f"rbar_c[{c:g}]" for c, v in self.rbar_c.items() if math.isinf(v)]
        return names

    def to_dict(self) -> dict:
        # +inf is written as null and listed under "infinite"
        def enc(v):
            return None if v is None or math.isinf(v) else v

        out = {k: enc(getattr(self, k)) for k in ("r1", "rbar1", "rbar_inf")}
        out["rbar_c"] = {repr(float(c)): enc(v) for c, v in self.rbar_c.items()}
        if self.empirical_r1 is not None:
            out["empirical_r1"] = self.empirical_r1
        out["infinite"] = self.infinite
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RiskReport":
        inf = set(data.get("infinite", []))

        def dec(name, v):
            return math.inf if name in inf else v

        rbar_c = {float(c): dec(f"rbar_c[{float(c):g}]", v) for c, v in data.get("rbar_c", {}).items()}
        return cls(
            r1=dec("r1", data["r1"]),
            rbar1=dec("rbar1", data["rbar1"]),
            rbar_inf=dec("rbar_inf", data["rbar_inf"]),
            rbar_c=rbar_c,
            empirical_r1=data.get("empirical_r1"),
        )


def _states(path) -> np.ndarray:
    return np.asarray(path.states if isinstance(path, StatePath) else path, dtype=np.int64)


def conditional_r1(posteriors: Posteriors, states, loss) -> float:
    """R_1(s|x) = (1/n) sum_t sum_a l(a, s_t) p_t(a|x)."""
    per_state = posteriors.smoothing @ loss  # [t, s] = sum_a p_t(a) l(a, s)
    return float(per_state[np.arange(len(states)), states].mean())


def rbar1(posteriors: Posteriors, states) -> float:
    p = posteriors.smoothing[np.arange(len(states)), states]
    if np.any(p <= 0):
        return math.inf
    return float(-np.log(p).mean()) + 0.0


def rbar_inf(model: HmmModel, log_B, posteriors: Posteriors, states) -> float:
    """-(1/n) ln p(s|x), accumulated term by term against the forward scales."""
    terms = _kernels.path_terms(states, model.log_initial, model.log_transition, log_B)
    if np.any(np.isneginf(terms)):
        return math.inf
    # +0.0 turns an exact -0.0 into 0.0
    return float(-(terms - posteriors.log_scale).sum() / len(states)) + 0.0


def evaluate_risks(
    model: HmmModel,
    x,
    posteriors: Posteriors,
    path,
    loss=None,
    c_grid=(),
    truth=None,
    log_B=None,
) -> RiskReport:
    states = _states(path)
    n = posteriors.n
    if states.shape != (n,):
        raise ValueError(f"path length {states.shape[0]} does not match sequence length {n}")
    if states.min() < 0 or states.max() >= model.num_states:
        raise ValueError(f"path uses a state outside [0, {model.num_states})")
    loss = check_loss(loss, model.num_states)
    log_B = model.log_emission(x) if log_B is None else log_B
    r1 = conditional_r1(posteriors, states, loss)
    rb1 = rbar1(posteriors, states)
    rbi = rbar_inf(model, log_B, posteriors, states)
    rbar_c = {}
    for c in c_grid:
        c = float(c)
        rbar_c[c] = rb1 if c == 0 else rb1 + c * rbi
    emp = empirical_r1(truth, states, loss) if truth is not None else None
    return RiskReport(r1=r1, rbar1=rb1, rbar_inf=rbi, rbar_c=rbar_c, empirical_r1=emp)


def empirical_r1(y, path, loss=None) -> float:
    """(1/n) sum_t l(y_t, s_t): the misclassification rate for the symmetric loss."""
    y = np.asarray(y, dtype=np.int64)
    s = _states(path)
    if y.shape != s.shape:
        raise ValueError(f"length mismatch: truth {y.shape} vs path {s.shape}")
    S = int(max(y.max(), s.max())) + 1
    loss = check_loss(loss, S) if loss is None else np.asarray(loss, dtype=np.float64)
    return float(loss[y, s].mean())
