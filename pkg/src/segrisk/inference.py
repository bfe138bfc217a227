"""Exact log-space forward-backward inference and forgetting profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import HmmModel


class ZeroLikelihoodError(ValueError):
    """An observation has probability zero under every reachable state."""

    def __init__(self, t: int):
        self.t = t
        super().__init__(f"observation at index {t} has zero likelihood under the model")


@dataclass(frozen=True, eq=False)
class Posteriors:
    """Smoothing marginals and log-likelihood of one observation sequence.

    ``log_alpha``/``log_beta`` are the unnormalized forward/backward variables;
    ``log_filter`` and ``log_scale`` are their normalized counterparts
    (ln P(Y_t | x_1..x_t) and ln p(x_t | x_1..x_{t-1})).
    """

    log_likelihood: float
    smoothing: np.ndarray
    log_filter: np.ndarray
    log_scale: np.ndarray
    log_beta_scaled: np.ndarray

    @property
    def n(self) -> int:
        return self.smoothing.shape[0]

    @property
    def log_alpha(self) -> np.ndarray:
        return self.log_filter + np.cumsum(self.log_scale)[:, None]

    @property
    def log_beta(self) -> np.ndarray:
        cum = np.cumsum(self.log_scale)
        return self.log_beta_scaled + (cum[-1] - cum)[:, None]


def run_forward(model: HmmModel, log_B: np.ndarray):
    log_filter, log_scale, bad = _kernels.forward(model.log_initial, model.log_transition, log_B)
    if bad >= 0:
        raise ZeroLikelihoodError(int(bad))
    return log_filter, log_scale


def posteriors_from_forward(model: HmmModel, log_B, log_filter, log_scale, m: int | None = None) -> Posteriors:
    """Posteriors for the prefix x_1..x_m, reusing a forward pass over a longer sequence."""
    m = log_B.shape[0] if m is None else m
    lf = log_filter[:m]
    ls = log_scale[:m]
    lb = _kernels.backward(model.log_transition, log_B[:m], ls)
    return Posteriors(
        log_likelihood=float(ls.sum()),
        smoothing=_kernels.smooth(lf, lb),
        log_filter=lf,
        log_scale=ls,
        log_beta_scaled=lb,
    )


def forward_backward(model: HmmModel, x) -> Posteriors:
    log_B = model.log_emission(x)
    if log_B.shape[0] < 1:
        raise ValueError("need at least one observation")
    log_filter, log_scale = run_forward(model, log_B)
    return posteriors_from_forward(model, log_B, log_filter, log_scale)


def tv_distance(p, q) -> float:
    """Total variation distance with the 1/2 factor, so the result lies in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1 (sum={v.sum():.12g})")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


@dataclass(frozen=True)
class ForgettingProfile:
    t: int
    gaps: list[int]
    tv: list[float]
    fitted_log_slope: float


def _fit_log_slope(gaps, tv) -> float:
    g = np.asarray(gaps, dtype=np.float64)
    v = np.asarray(tv, dtype=np.float64)
    keep = v > 1e-14
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(g[keep], np.log(v[keep] + 1e-300), 1)
    return float(slope)


def windowed_marginals(model: HmmModel, log_B, log_filter, t: int, ends) -> np.ndarray:
    """P(Y_t | x_0..x_m) for each m in ``ends`` (0-indexed, each m >= t).

    The backward message over x_{t+1..m} is the product of the matrices
    P diag(f(x_k)), accumulated left to right so each window costs O(1) extra.
    """
    ends = list(ends)
    filt = np.exp(log_filter[t])
    P = model.transition
    out = np.empty((len(ends), model.num_states))
    want = {m: k for k, m in enumerate(ends)}
    L = np.eye(model.num_states)
    if t in want:
        out[want[t]] = filt
    for m in range(t + 1, max(ends) + 1):
        b = log_B[m]
        L = (L @ P) * np.exp(b - b.max())[None, :]
        L /= L.max()
        if m in want:
            w = filt * L.sum(axis=1)
            out[want[m]] = w / w.sum()
    return out


def forgetting_profile(model: HmmModel, x, t: int, gaps, *, _cache=None) -> ForgettingProfile:
    """Right-window forgetting at anchor ``t`` (0-indexed).

    tv[k] = TV(P(Y_t | x_0..x_{t+gaps[k]}), P(Y_t | x_0..x_{t+max(gaps)})).
    """
    gaps = [int(g) for g in gaps]
    if not gaps or any(g < 0 for g in gaps) or any(b <= a for a, b in zip(gaps, gaps[1:])):
        raise ValueError("gaps must be nonnegative and strictly increasing")
    if _cache is None:
        log_B = model.log_emission(x)
        log_filter, _ = run_forward(model, log_B)
    else:
        log_B, log_filter = _cache
    n = log_B.shape[0]
    if t < 0 or t + gaps[-1] > n - 1:
        raise ValueError(f"anchor {t} with max gap {gaps[-1]} exceeds sequence length {n}")
    marg = windowed_marginals(model, log_B, log_filter, t, [t + g for g in gaps])
    ref = marg[-1]
    tv = [tv_distance(m, ref) for m in marg]
    return ForgettingProfile(t=t, gaps=gaps, tv=tv, fitted_log_slope=_fit_log_slope(gaps, tv))


def forgetting_study(model: HmmModel, x, anchors, gaps) -> list[ForgettingProfile]:
    """Profiles at several anchors sharing one forward pass."""
    log_B = model.log_emission(x)
    log_filter, _ = run_forward(model, log_B)
    return [forgetting_profile(model, x, int(t), gaps, _cache=(log_B, log_filter)) for t in anchors]


def mean_log_slope(profiles) -> float:
    slopes = [p.fitted_log_slope for p in profiles if not math.isnan(p.fitted_log_slope)]
    return float(np.mean(slopes)) if slopes else math.nan
