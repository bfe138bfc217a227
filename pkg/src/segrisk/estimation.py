"""Monte Carlo estimation of the asymptotic segmentation risks.

One simulation run samples ``reps`` independent sequences, decodes each with
a single shared Viterbi lattice and forward pass, and records per-checkpoint
risks. Replicate ``k`` draws from the PCG64 stream derived from
``SeedSequence([seed, k])``, so results do not depend on scheduling.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .alignment import viterbi_from_lattice, viterbi_lattice
from .inference import posteriors_from_forward, run_forward
from .model import (
    Categorical,
    HmmModel,
    check_loss,
    expected_log_emission,
    make_rng,
    markov_entropy_rate,
    sample,
)
from .regeneration import ClusterInfo, default_probe_grid, detect_cluster, fixation_from_lattice, stopping_times
from .risk import conditional_r1, empirical_r1, rbar1, rbar_inf

TRACE_COLUMNS = (
    "n",
    "replicate",
    "empirical_r1",
    "conditional_r1",
    "rbar1_viterbi",
    "rbar1_pmap",
    "rbar_inf_direct",
    "rbar_inf_decomposed",
)
MIN_BURN_IN = 100


def default_checkpoints(n: int) -> list[int]:
    return sorted({max(1, n // 100), max(1, n // 10), max(1, n // 2), n})


@dataclass
class SimulationTrace:
    """Per-checkpoint, per-replicate records plus per-replicate renewal summaries."""

    model_id: str
    seed: int
    n: int
    checkpoints: list[int]
    rows: list[dict]
    replicates: list[dict]

    def column(self, name: str, n: int | None = None, include_excluded: bool = False) -> np.ndarray:
        n = self.checkpoints[-1] if n is None else n
        bad = set() if include_excluded else {r["replicate"] for r in self.replicates if r["infinite"]}
        return np.array([r[name] for r in self.rows if r["n"] == n and r["replicate"] not in bad])

    @property
    def excluded(self) -> int:
        return sum(1 for r in self.replicates if r["infinite"])


@dataclass
class Estimate:
    estimate: float
    se: float

    @classmethod
    def of(cls, values) -> "Estimate":
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            return cls(math.nan, math.nan)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
        return cls(float(v.mean()), se)


@dataclass
class AsymptoticRiskReport:
    model_id: str
    n: int
    reps: int
    seed: int
    r1_longrun: Estimate
    r1_conditional: Estimate
    r1_renewal: Estimate
    rbar1: Estimate
    rbar1_star: Estimate
    rbar_inf_direct: Estimate
    rbar_inf_decomposed: Estimate
    rbar_y_inf: Estimate
    emission_term: float
    transition_term: float
    hx_term: float
    m_s: list[float]
    q_s_tables: list
    mean_cycle: float
    burn_in: list[int]
    excluded_replicates: int
    pmap_dominance_violations: int

    def to_dict(self) -> dict:
        return json_safe(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "AsymptoticRiskReport":
        data = _decode(dict(data))
        for k, v in data.items():
            if isinstance(v, dict) and set(v) == {"estimate", "se"}:
                data[k] = Estimate(**v)
        return cls(**data)


def json_safe(obj):
    # JSON has no NaN/inf: write null, and read null back as NaN
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [json_safe(v) for v in obj]
    return obj


def _decode(obj, key=None):
    if isinstance(obj, dict):
        return {k: _decode(v, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return obj
    if obj is None and key in ("estimate", "se", "emission_term", "transition_term", "hx_term", "mean_cycle"):
        return math.nan
    return obj


# -- one replicate -----------------------------------------------------------

def _decomposition(model, log_B, log_scale, v, m, b):
    """Window (b, m] averages of the three likelihood-split terms along path v."""
    w = m - b
    em_terms = log_B[np.arange(b, m), v[b:m]]
    logP = model.log_transition
    tr = np.empty(w)
    start = 0
    if b == 0:
        tr[0] = model.log_initial[v[0]]
        start = 1
    idx = np.arange(b + start, m)
    tr[start:] = logP[v[idx - 1], v[idx]]
    if np.any(np.isneginf(tr)):
        raise AssertionError("Viterbi path uses a zero-probability transition")
    emission = float(em_terms.sum() / w)
    transition = float(tr.sum() / w)
    hx = float(-log_scale[b:m].sum() / w)
    return emission, transition, hx


def _occupancy(model, x, v, b, m):
    S = model.num_states
    xs, vs = x[b:m], v[b:m]
    counts = np.bincount(vs, minlength=S)
    m_hat = counts / counts.sum()
    tables = []
    for s in range(S):
        sel = xs[vs == s]
        if sel.size == 0:
            tables.append(None)
        elif isinstance(model.emission, Categorical):
            h = np.bincount(sel, minlength=model.emission.alphabet_size)
            tables.append((h / h.sum()).tolist())
        else:
            tables.append({"count": int(sel.size), "mean": float(sel.mean()), "std": float(sel.std())})
    return m_hat, tables


def run_replicate(model, n, seed, rep, checkpoints, loss, m_pad, probe_step) -> dict:
    smp = sample(model, n, seed, rng=make_rng(seed, rep))
    x, y = smp.x, smp.y
    log_B = model.log_emission(x)
    log_filter, log_scale = run_forward(model, log_B)
    delta, bp = viterbi_lattice(model, log_B)
    v_full = viterbi_from_lattice(delta, bp, n)

    diag = fixation_from_lattice(delta, bp, default_probe_grid(n, probe_step), m_pad)
    fp = diag.fixation_points
    if fp.size >= 2:
        lo, hi = int(fp[0]), int(fp[-1])
        cycle_loss = float(loss[y[lo + 1: hi + 1], v_full[lo + 1: hi + 1]].sum())
        cycle_len = hi - lo
    else:
        cycle_loss, cycle_len = 0.0, 0
    mean_cycle = diag.mean_cycle if math.isfinite(diag.mean_cycle) else 0.0
    burn_in = int(max(MIN_BURN_IN, math.ceil(2 * mean_cycle)))

    rows = []
    infinite = False
    pmap_ok = True
    for m in checkpoints:
        v = viterbi_from_lattice(delta, bp, m)
        post = posteriors_from_forward(model, log_B, log_filter, log_scale, m)
        u = np.argmax(post.smoothing, axis=1)
        r_v = rbar1(post, v)
        r_u = rbar1(post, u)
        direct = rbar_inf(model, log_B[:m], post, v)
        b = min(burn_in, m // 2)
        emission, transition, hx = _decomposition(model, log_B, log_scale, v, m, b)
        decomposed = -(emission + transition + hx) + 0.0
        infinite |= math.isinf(r_v) or math.isinf(direct)
        pmap_ok &= r_u <= r_v
        rows.append({
            "n": m,
            "replicate": rep,
            "empirical_r1": empirical_r1(y[:m], v, loss),
            "conditional_r1": conditional_r1(post, v, loss),
            "rbar1_viterbi": r_v,
            "rbar1_pmap": r_u,
            "rbar_inf_direct": direct,
            "rbar_inf_decomposed": decomposed,
            "emission_term": emission,
            "transition_term": transition,
            "hx_term": hx,
            "hx_full": float(-log_scale[:m].sum() / m),
            "burn_in": b,
        })
    b = min(burn_in, n // 2)
    m_hat, q_tables = _occupancy(model, x, v_full, b, n)
    return {
        "replicate": rep,
        "rows": rows,
        "infinite": infinite,
        "pmap_dominance": pmap_ok,
        "cycle_loss": cycle_loss,
        "cycle_len": cycle_len,
        "n_cycles": int(max(fp.size - 1, 0)),
        "mean_cycle": diag.mean_cycle,
        "burn_in": b,
        "m_hat": m_hat.tolist(),
        "q_tables": q_tables,
    }


def simulate(
    model: HmmModel,
    n: int,
    reps: int,
    seed: int,
    checkpoints=None,
    loss=None,
    m_pad: int = 20,
    probe_step: int = 100,
    workers: int = 1,
) -> SimulationTrace:
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be positive")
    checkpoints = default_checkpoints(n) if checkpoints is None else sorted({int(c) for c in checkpoints})
    if checkpoints[0] < 1 or checkpoints[-1] > n:
        raise ValueError(f"checkpoints must lie in [1, {n}]")
    if checkpoints[-1] != n:
        checkpoints.append(n)
    loss = check_loss(loss, model.num_states)
    args = [(model, n, seed, k, checkpoints, loss, m_pad, probe_step) for k in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate, *zip(*args)))
    else:
        results = [run_replicate(*a) for a in args]
    results.sort(key=lambda r: r["replicate"])
    rows = [row for r in results for row in r["rows"]]
    rows.sort(key=lambda r: (r["n"], r["replicate"]))
    replicates = [{k: v for k, v in r.items() if k != "rows"} for r in results]
    return SimulationTrace(model.model_id(), seed, n, checkpoints, rows, replicates)


# -- summaries ---------------------------------------------------------------

def r1_summary(trace: SimulationTrace) -> dict[str, Estimate]:
    """Long-run (empirical), conditional and renewal-reward estimates of R_1."""
    good = [r for r in trace.replicates if not r["infinite"] and r["cycle_len"] > 0]
    per_rep = [r["cycle_loss"] / r["cycle_len"] for r in good]
    pooled = sum(r["cycle_loss"] for r in good) / sum(r["cycle_len"] for r in good) if good else math.nan
    renewal = Estimate(pooled, Estimate.of(per_rep).se)
    return {
        "longrun": Estimate.of(trace.column("empirical_r1")),
        "conditional": Estimate.of(trace.column("conditional_r1")),
        "renewal": renewal,
    }


def rbar_y_inf_values(model: HmmModel, hx_values) -> np.ndarray:
    """-(sum_s pi_s int ln f_s dP_s - H_Y + H_X) for each SMB estimate of H_X."""
    pi = model.initial_distribution
    emission = sum(pi[s] * expected_log_emission(model, s) for s in range(model.num_states))
    h_y = markov_entropy_rate(model)
    return -(emission - h_y + np.asarray(hx_values, dtype=np.float64))


def summarize(model: HmmModel, trace: SimulationTrace) -> AsymptoticRiskReport:
    r1 = r1_summary(trace)
    good = [r for r in trace.replicates if not r["infinite"]]
    S = model.num_states
    if good:
        m_s = np.mean([r["m_hat"] for r in good], axis=0)
        m_s = (m_s / m_s.sum()).tolist()
        q_tables = []
        for s in range(S):
            tabs = [r["q_tables"][s] for r in good if r["q_tables"][s] is not None]
            if not tabs:
                q_tables.append(None)
            elif isinstance(model.emission, Categorical):
                q = np.mean(tabs, axis=0)
                q_tables.append((q / q.sum()).tolist())
            else:
                q_tables.append({k: float(np.mean([t[k] for t in tabs])) for k in ("mean", "std")})
    else:
        m_s, q_tables = [math.nan] * S, [None] * S
    cycles = [r["mean_cycle"] for r in good if math.isfinite(r["mean_cycle"])]
    return AsymptoticRiskReport(
        model_id=trace.model_id,
        n=trace.n,
        reps=len(trace.replicates),
        seed=trace.seed,
        r1_longrun=r1["longrun"],
        r1_conditional=r1["conditional"],
        r1_renewal=r1["renewal"],
        rbar1=Estimate.of(trace.column("rbar1_viterbi")),
        rbar1_star=Estimate.of(trace.column("rbar1_pmap")),
        rbar_inf_direct=Estimate.of(trace.column("rbar_inf_direct")),
        rbar_inf_decomposed=Estimate.of(trace.column("rbar_inf_decomposed")),
        rbar_y_inf=Estimate.of(rbar_y_inf_values(model, trace.column("hx_full"))),
        emission_term=float(np.mean(trace.column("emission_term"))) if good else math.nan,
        transition_term=float(np.mean(trace.column("transition_term"))) if good else math.nan,
        hx_term=float(np.mean(trace.column("hx_term"))) if good else math.nan,
        m_s=m_s,
        q_s_tables=q_tables,
        mean_cycle=float(np.mean(cycles)) if cycles else math.nan,
        burn_in=[int(r["burn_in"]) for r in trace.replicates],
        excluded_replicates=trace.excluded,
        pmap_dominance_violations=sum(1 for r in trace.replicates if not r["pmap_dominance"]),
    )


def estimate_r1(model: HmmModel, n: int, reps: int, seed: int, loss=None, **kw):
    trace = simulate(model, n, reps, seed, loss=loss, **kw)
    return trace, r1_summary(trace)


def estimate_rbar1(model: HmmModel, n: int, reps: int, seed: int, **kw) -> dict:
    trace = simulate(model, n, reps, seed, **kw)
    return {
        "rbar1": Estimate.of(trace.column("rbar1_viterbi")),
        "rbar1_star": Estimate.of(trace.column("rbar1_pmap")),
        "checkpoint_means": {m: float(np.mean(trace.column("rbar1_viterbi", m))) for m in trace.checkpoints},
        "excluded": trace.excluded,
        "dominance_violations": sum(1 for r in trace.replicates if not r["pmap_dominance"]),
    }


def estimate_rbar_inf(model: HmmModel, n: int, reps: int, seed: int, **kw) -> dict:
    trace = simulate(model, n, reps, seed, **kw)
    rep = summarize(model, trace)
    return {
        "direct": rep.rbar_inf_direct,
        "decomposed": rep.rbar_inf_decomposed,
        "gap": abs(rep.rbar_inf_direct.estimate - rep.rbar_inf_decomposed.estimate),
        "emission_term": rep.emission_term,
        "transition_term": rep.transition_term,
        "hx_term": rep.hx_term,
        "m_s": rep.m_s,
        "q_s_tables": rep.q_s_tables,
    }


def estimate_rbar_y_inf(model: HmmModel, n: int, seed: int, reps: int = 1) -> Estimate:
    """Closed-form emission and chain entropy terms plus SMB estimates of H_X."""
    if n < 1:
        raise ValueError("n must be positive")
    hx = []
    for k in range(reps):
        smp = sample(model, n, seed, rng=make_rng(seed, k))
        _, log_scale = run_forward(model, model.log_emission(smp.x))
        hx.append(-log_scale.sum() / n)
    return Estimate.of(rbar_y_inf_values(model, hx)) if reps > 1 else Estimate(
        float(rbar_y_inf_values(model, hx)[0]), math.nan
    )


# -- posterior floor -------------------------------------------------------------

@dataclass
class FloorRow:
    n: int
    rho_hat: float
    pairs: int
    argmax_t: int


@dataclass
class PosteriorFloorStats:
    rows: list[FloorRow] = field(default_factory=list)
    diagnostic: Optional[str] = None

    @property
    def stability(self) -> float:
        """max/min of rho_hat across the n grid (1.0 when all are zero)."""
        vals = [r.rho_hat for r in self.rows if math.isfinite(r.rho_hat)]
        if not vals:
            return math.nan
        lo, hi = min(vals), max(vals)
        if hi == 0:
            return 1.0
        return hi / lo if lo > 0 else math.inf


def floor_pairs(model: HmmModel, x, info: ClusterInfo, post, v):
    """(-ln p_t(v_t|x), W_t - U_t) for every t where both stopping times are defined."""
    rt = stopping_times(x, info)
    ok = rt.u_defined & rt.w_defined
    t = np.flatnonzero(ok)
    p = post.smoothing[t, v[t]]
    with np.errstate(divide="ignore"):
        neg_log = -np.log(p) + 0.0
    return t, neg_log, (rt.stopping_w - rt.stopping_u)[t]


def posterior_floor_stats(model: HmmModel, n_grid, seed: int, info: ClusterInfo | None = None) -> PosteriorFloorStats:
    """rho_hat(n) = max_t (-ln p_t(v_t|x^n)) / (W_t - U_t) on nested prefixes of one sample."""
    n_grid = sorted(int(n) for n in n_grid)
    info = detect_cluster(model) if info is None else info
    smp = sample(model, n_grid[-1], seed)
    log_B = model.log_emission(smp.x)
    log_filter, log_scale = run_forward(model, log_B)
    delta, bp = viterbi_lattice(model, log_B)
    out = PosteriorFloorStats()
    for n in n_grid:
        post = posteriors_from_forward(model, log_B, log_filter, log_scale, n)
        v = viterbi_from_lattice(delta, bp, n)
        t, neg_log, width = floor_pairs(model, smp.x[:n], info, post, v)
        if t.size == 0:
            out.rows.append(FloorRow(n, math.nan, 0, -1))
            out.diagnostic = "no time with both stopping times defined"
            continue
        ratio = neg_log / width
        k = int(np.argmax(ratio))
        out.rows.append(FloorRow(n, float(ratio[k]), int(t.size), int(t[k])))
    return out


__all__ = [
    "AsymptoticRiskReport",
    "Estimate",
    "PosteriorFloorStats",
    "SimulationTrace",
    "TRACE_COLUMNS",
    "default_checkpoints",
    "estimate_r1",
    "estimate_rbar1",
    "estimate_rbar_inf",
    "estimate_rbar_y_inf",
    "posterior_floor_stats",
    "simulate",
    "summarize",
]
