"""Structural diagnostics: clusters, the A2 condition, barrier stopping times
and empirical prefix fixation of the Viterbi alignment.

Fixation points stand in for renewal times: a time t is fixed when every
probed Viterbi alignment of a longer prefix agrees with the reference
alignment on positions 0..t.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .alignment import viterbi_lattice
from .inference import run_forward
from .model import Categorical, HmmModel, primitivity_exponent

_Z_HALF = 0.6744897501960817  # P(|Z| <= z) = 1/2


class A1Failure(ValueError):
    """No cluster with a primitive restricted transition matrix exists."""

    def __init__(self, message: str, offending: list):
        self.offending = offending
        super().__init__(message)


@dataclass(frozen=True)
class ClusterInfo:
    cluster: tuple[int, ...]
    r: int
    barrier_set: dict  # {"symbols": [...]} or {"interval": [lo, hi]}
    eps: float
    m_bound: float
    all_clusters: tuple[tuple[int, ...], ...] = ()

    def in_barrier(self, x) -> np.ndarray:
        x = np.asarray(x)
        if "symbols" in self.barrier_set:
            return np.isin(x, self.barrier_set["symbols"])
        lo, hi = self.barrier_set["interval"]
        return (x >= lo) & (x <= hi)

    def to_dict(self) -> dict:
        return {
            "cluster": list(self.cluster),
            "r": self.r,
            "barrier_set": self.barrier_set,
            "eps": self.eps,
            "M": self.m_bound,
            "all_clusters": [list(c) for c in self.all_clusters],
        }


@dataclass
class RenewalDiagnostics:
    stopping_u: Optional[np.ndarray] = None  # -1 where undefined
    stopping_w: Optional[np.ndarray] = None
    fixation_points: Optional[np.ndarray] = None
    cycle_lengths: Optional[np.ndarray] = None
    mean_cycle: float = math.nan
    eligible_until: int = -1
    probe_merge: dict = field(default_factory=dict)

    @property
    def u_defined(self) -> np.ndarray:
        return self.stopping_u >= 0

    @property
    def w_defined(self) -> np.ndarray:
        return self.stopping_w >= 0


# -- A1 ----------------------------------------------------------------------

def _categorical_clusters(F: np.ndarray) -> list[tuple[tuple[int, ...], np.ndarray]]:
    S = F.shape[0]
    support = F > 0
    found = []
    for size in range(S, 0, -1):
        for C in itertools.combinations(range(S), size):
            common = support[list(C)].all(axis=0)
            if not common.any():
                continue
            mass = F[:, common].sum(axis=1)
            outside = [j for j in range(S) if j not in C]
            if min(mass[list(C)]) > 0 and (not outside or max(mass[outside]) == 0):
                found.append((C, common))
    return found


def gaussian_barrier_interval(model: HmmModel, eps: float | None = None) -> tuple[float, float]:
    """Interval where every Gaussian density is at least ``eps``.

    Default: the hull of the central half-mass intervals, so P_s(interval) >= 1/2
    for every s.
    """
    em = model.emission
    if eps is None:
        return float(np.min(em.means - _Z_HALF * em.stds)), float(np.max(em.means + _Z_HALF * em.stds))
    lo, hi = -math.inf, math.inf
    for mu, sd in zip(em.means, em.stds):
        arg = -2 * math.log(eps * sd * math.sqrt(2 * math.pi))
        if arg < 0:
            raise A1Failure(f"no x has all densities >= eps={eps:g}", [])
        half = sd * math.sqrt(arg)
        lo, hi = max(lo, mu - half), min(hi, mu + half)
    if not lo < hi:
        raise A1Failure(f"densities are never simultaneously >= eps={eps:g}", [])
    return lo, hi


def detect_cluster(model: HmmModel, eps: float | None = None) -> ClusterInfo:
    """Find a cluster whose restricted transition matrix is primitive.

    Larger clusters are preferred, then lexicographic order. For categorical
    models ``eps`` optionally trims the barrier set to symbols where every
    cluster density is at least ``eps``; for Gaussian models it defines the
    barrier interval.
    """
    P = model.transition
    em = model.emission
    if isinstance(em, Categorical):
        F = em.probs
        clusters = _categorical_clusters(F)
        offending = []
        for C, common in clusters:
            R = P[np.ix_(C, C)]
            r = primitivity_exponent(R > 0)
            if r is None:
                offending.append({"cluster": list(C), "R": R.tolist()})
                continue
            symbols = np.flatnonzero(common)
            dens = F[np.ix_(C, symbols)]
            if eps is not None:
                keep = dens.min(axis=0) >= eps
                symbols, dens = symbols[keep], dens[:, keep]
                if symbols.size == 0:
                    offending.append({"cluster": list(C), "reason": f"no symbol with density >= {eps:g}"})
                    continue
            return ClusterInfo(
                cluster=tuple(C),
                r=r,
                barrier_set={"symbols": symbols.tolist()},
                eps=float(dens.min()),
                m_bound=float(dens.max()),
                all_clusters=tuple(c for c, _ in clusters),
            )
        raise A1Failure("A1 fails: no cluster has a primitive transition submatrix", offending)

    C = tuple(range(model.num_states))
    r = primitivity_exponent(P > 0)
    if r is None:
        raise A1Failure("A1 fails: transition matrix is not primitive", [{"cluster": list(C), "R": P.tolist()}])
    lo, hi = gaussian_barrier_interval(model, eps)
    ends = np.array([lo, hi])
    dens_ends = np.exp(model.log_emission(ends))
    peak = 1.0 / (em.stds * math.sqrt(2 * math.pi))
    inside = (em.means >= lo) & (em.means <= hi)
    m_bound = float(np.max(np.where(inside, peak, dens_ends.max(axis=0))))
    return ClusterInfo(
        cluster=C,
        r=r,
        barrier_set={"interval": [lo, hi]},
        eps=float(dens_ends.min()),  # unimodal densities: the minimum is at an endpoint
        m_bound=m_bound,
        all_clusters=(C,),
    )


# -- A2 ----------------------------------------------------------------------

def _quadratic_positive_intervals(a: float, b: float, c: float) -> list[tuple[float, float]]:
    """Open intervals where a x^2 + b x + c > 0."""
    if abs(a) < 1e-300:
        if abs(b) < 1e-300:
            return [(-math.inf, math.inf)] if c > 0 else []
        root = -c / b
        return [(root, math.inf)] if b > 0 else [(-math.inf, root)]
    disc = b * b - 4 * a * c
    if disc <= 0:
        return [(-math.inf, math.inf)] if a > 0 else []
    sq = math.sqrt(disc)
    r1, r2 = sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a)))
    return [(-math.inf, r1), (r2, math.inf)] if a > 0 else [(r1, r2)]


def _intersect(A, B):
    out = []
    for a0, a1 in A:
        for b0, b1 in B:
            lo, hi = max(a0, b0), min(a1, b1)
            if lo < hi:
                out.append((lo, hi))
    return out


def check_a2(model: HmmModel) -> tuple[bool, dict]:
    """Decide P_l{x : f_l(x) p*_l > max_{s!=l} f_s(x) p*_s} > 0 for each state l.

    Returns (holds, witnesses) where witnesses[l] is an observation in the
    region (categorical: a symbol; Gaussian: a point) or None.
    """
    S = model.num_states
    p_star = model.transition.max(axis=0)
    witnesses: dict[int, object] = {}
    em = model.emission
    if isinstance(em, Categorical):
        F = em.probs
        score = F * p_star[:, None]
        for l in range(S):
            others = np.delete(score, l, axis=0).max(axis=0)
            ok = (score[l] > others) & (F[l] > 0)
            witnesses[l] = int(np.flatnonzero(ok)[0]) if ok.any() else None
    else:
        for l in range(S):
            if p_star[l] <= 0:
                witnesses[l] = None
                continue
            region = [(-math.inf, math.inf)]
            for s in range(S):
                if s == l:
                    continue
                if p_star[s] <= 0:
                    continue
                # ln f_l + ln p*_l - ln f_s - ln p*_s > 0 as a quadratic in x
                ml, sl, ms, ss = em.means[l], em.stds[l], em.means[s], em.stds[s]
                a = -0.5 / sl**2 + 0.5 / ss**2
                b = ml / sl**2 - ms / ss**2
                c = (-0.5 * ml**2 / sl**2 + 0.5 * ms**2 / ss**2
                     - math.log(sl) + math.log(ss) + math.log(p_star[l]) - math.log(p_star[s]))
                region = _intersect(region, _quadratic_positive_intervals(a, b, c))
                if not region:
                    break
            if region:
                lo, hi = region[0]
                if math.isinf(lo) and math.isinf(hi):
                    point = float(em.means[l])
                elif math.isinf(lo):
                    point = hi - 1.0
                elif math.isinf(hi):
                    point = lo + 1.0
                else:
                    point = 0.5 * (lo + hi)
                witnesses[l] = point
            else:
                witnesses[l] = None
    holds = all(w is not None for w in witnesses.values())
    return holds, witnesses


# -- stopping times ----------------------------------------------------------

def stopping_times(x, info: ClusterInfo) -> RenewalDiagnostics:
    """Barrier stopping times (0-indexed).

    W_t = min{tau >= t+r+1 : x_{tau-r..tau} all in the barrier set},
    U_t = max{tau <= t-r-1 : x_{tau..tau+r} all in the barrier set};
    -1 marks an undefined entry.
    """
    r = info.r
    inb = info.in_barrier(x).astype(np.int64)
    n = inb.shape[0]
    csum = np.concatenate([[0], np.cumsum(inb)])
    block_end = np.zeros(n, dtype=bool)  # x[tau-r..tau] in barrier
    if n > r:
        block_end[r:] = (csum[r + 1:] - csum[: n - r]) == r + 1
    block_start = np.zeros(n, dtype=bool)  # x[tau..tau+r] in barrier
    if n > r:
        block_start[: n - r] = block_end[r:]

    nxt = np.full(n + 1, -1, dtype=np.int64)  # smallest tau >= i with block_end
    for i in range(n - 1, -1, -1):
        nxt[i] = i if block_end[i] else nxt[i + 1]
    prv = np.full(n, -1, dtype=np.int64)  # largest tau <= i with block_start
    last = -1
    for i in range(n):
        if block_start[i]:
            last = i
        prv[i] = last

    t = np.arange(n)
    lo = t + r + 1
    W = np.where(lo < n, nxt[np.minimum(lo, n)], -1)
    hi = t - r - 1
    U = np.where(hi >= 0, prv[np.maximum(hi, 0)], -1)
    return RenewalDiagnostics(stopping_u=U, stopping_w=W)


# -- fixation ----------------------------------------------------------------

def fixation_from_lattice(delta, bp, probe_grid, m_pad: int, min_probes: int = 3) -> RenewalDiagnostics:
    """Fixation points from a shared Viterbi lattice.

    ``probe_grid`` holds prefix lengths; the longest probe is the reference.
    Only times t with at least ``min_probes`` probes n' >= t+1+m_pad are
    eligible (probe n' covers indices 0..n'-1).
    """
    probes = np.unique(np.asarray(probe_grid, dtype=np.int64))
    n = delta.shape[0]
    if probes.size == 0 or probes[0] < 1 or probes[-1] > n:
        raise ValueError(f"probe grid must lie in [1, {n}]")
    if probes.size < min_probes:
        raise ValueError(f"probe grid has {probes.size} probes; at least {min_probes} needed")
    n_ref = int(probes[-1])
    ref = _kernels.backtrack(bp, _kernels.first_argmax(delta[n_ref - 1]), n_ref)
    merge = np.empty(probes.size, dtype=np.int64)
    for k, p in enumerate(probes):
        last = _kernels.first_argmax(delta[p - 1])
        merge[k] = _kernels.merge_time(bp, last, int(p), ref)
    # suffix minimum of merge times over probes at least as long
    suffix_min = np.minimum.accumulate(merge[::-1])[::-1]
    # probes covering t: first probe index with p >= t + 1 + m_pad
    t = np.arange(n_ref)
    first = np.searchsorted(probes, t + 1 + m_pad, side="left")
    eligible = (probes.size - first) >= min_probes
    idx = np.minimum(first, probes.size - 1)
    fixed = eligible & (t <= suffix_min[idx])
    points = np.flatnonzero(fixed)
    cycles = np.diff(points)
    elig = np.flatnonzero(eligible)
    return RenewalDiagnostics(
        fixation_points=points,
        cycle_lengths=cycles,
        mean_cycle=float(cycles.mean()) if cycles.size else math.nan,
        eligible_until=int(elig[-1]) if elig.size else -1,
        probe_merge={int(p): int(m) for p, m in zip(probes, merge)},
    )


def fixation_points(model: HmmModel, x, m_pad: int, probe_grid, min_probes: int = 3) -> RenewalDiagnostics:
    log_B = model.log_emission(x)
    run_forward(model, log_B)
    delta, bp = viterbi_lattice(model, log_B)
    return fixation_from_lattice(delta, bp, probe_grid, m_pad, min_probes)


def default_probe_grid(n: int, step: int = 100) -> list[int]:
    grid = list(range(step, n + 1, step))
    if not grid or grid[-1] != n:
        grid.append(n)
    return grid
