"""Compiled inner loops. All arrays are float64 log-values unless noted.

Ties in every max/argmax resolve to the smallest state index (strict ``>``
while scanning upward).
"""
import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lse(v):
    m = NEG_INF
    for a in v:
        if a > m:
            m = a
    if m == NEG_INF:
        return NEG_INF
    s = 0.0
    for a in v:
        s += np.exp(a - m)
    return m + np.log(s)


@njit(cache=True)
def forward(log_pi, log_P, log_B):
    """Normalized log-forward pass.

    Returns (log_filter, log_scale, bad_t): log_filter[t] = ln P(Y_t | x_1..x_t),
    log_scale[t] = ln p(x_t | x_1..x_{t-1}); bad_t = first index with zero
    likelihood, or -1.
    """
    n, S = log_B.shape
    log_filter = np.full((n, S), NEG_INF)
    log_scale = np.zeros(n)
    u = np.empty(S)
    tmp = np.empty(S)
    for j in range(S):
        u[j] = log_pi[j] + log_B[0, j]
    c = _lse(u)
    if c == NEG_INF:
        return log_filter, log_scale, 0
    log_scale[0] = c
    for j in range(S):
        log_filter[0, j] = u[j] - c
    for t in range(1, n):
        for j in range(S):
            for i in range(S):
                tmp[i] = log_filter[t - 1, i] + log_P[i, j]
            u[j] = _lse(tmp) + log_B[t, j]
        c = _lse(u)
        if c == NEG_INF:
            return log_filter, log_scale, t
        log_scale[t] = c
        for j in range(S):
            log_filter[t, j] = u[j] - c
    return log_filter, log_scale, -1


@njit(cache=True)
def backward(log_P, log_B, log_scale):
    """Scaled log-backward pass matching :func:`forward`'s scales.

    log_filter + log_beta is the log smoothing marginal (up to rounding).
    """
    n, S = log_B.shape
    log_beta = np.zeros((n, S))
    tmp = np.empty(S)
    for t in range(n - 2, -1, -1):
        for i in range(S):
            for j in range(S):
                tmp[j] = log_P[i, j] + log_B[t + 1, j] + log_beta[t + 1, j]
            log_beta[t, i] = _lse(tmp) - log_scale[t + 1]
    return log_beta


@njit(cache=True)
def smooth(log_filter, log_beta):
    n, S = log_filter.shape
    out = np.zeros((n, S))
    row = np.empty(S)
    for t in range(n):
        for s in range(S):
            row[s] = log_filter[t, s] + log_beta[t, s]
        z = _lse(row)
        for s in range(S):
            out[t, s] = np.exp(row[s] - z)
    return out


@njit(cache=True)
def viterbi_lattice(log_pi, log_P, log_B):
    """Max-product lattice. Returns (delta, backptr); delta rows are shifted by
    their max so they stay O(1); argmax decisions are unaffected."""
    n, S = log_B.shape
    delta = np.full((n, S), NEG_INF)
    bp = np.zeros((n, S), dtype=np.int64)
    for j in range(S):
        delta[0, j] = log_pi[j] + log_B[0, j]
    _shift_row(delta, 0)
    for t in range(1, n):
        for j in range(S):
            best = NEG_INF
            arg = 0
            for i in range(S):
                v = delta[t - 1, i] + log_P[i, j]
                if v > best:
                    best = v
                    arg = i
            delta[t, j] = best + log_B[t, j]
            bp[t, j] = arg
        _shift_row(delta, t)
    return delta, bp


@njit(cache=True)
def _shift_row(delta, t):
    S = delta.shape[1]
    m = NEG_INF
    for j in range(S):
        if delta[t, j] > m:
            m = delta[t, j]
    if m != NEG_INF:
        for j in range(S):
            delta[t, j] -= m


@njit(cache=True)
def first_argmax(row):
    best = row[0]
    arg = 0
    for j in range(1, row.shape[0]):
        if row[j] > best:
            best = row[j]
            arg = j
    return arg


@njit(cache=True)
def backtrack(bp, last_state, end):
    """Path of length ``end`` ending in ``last_state`` at index end-1."""
    path = np.empty(end, dtype=np.int64)
    s = last_state
    path[end - 1] = s
    for t in range(end - 1, 0, -1):
        s = bp[t, s]
        path[t - 1] = s
    return path


@njit(cache=True)
def merge_time(bp, last_state, end, ref):
    """Backtrack from (end-1, last_state) until the path meets ``ref``.

    Returns the largest index tau <= end-1 with path[tau] == ref[tau]; since
    backpointers are shared, the two paths agree on 0..tau. -1 if never.
    """
    s = last_state
    t = end - 1
    while t >= 0:
        if s == ref[t]:
            return t
        s = bp[t, s]
        t -= 1
    return -1


@njit(cache=True)
def hybrid_dp(point, log_pi, log_P, log_B, c):
    """Maximize sum_t point[t, s_t] + c * ln p(x, s); c == 0 drops the model terms."""
    n, S = point.shape
    delta = np.full((n, S), NEG_INF)
    bp = np.zeros((n, S), dtype=np.int64)
    for j in range(S):
        delta[0, j] = point[0, j]
        if c > 0:
            delta[0, j] += c * (log_pi[j] + log_B[0, j])
    for t in range(1, n):
        for j in range(S):
            best = NEG_INF
            arg = 0
            for i in range(S):
                v = delta[t - 1, i]
                if c > 0:
                    v += c * log_P[i, j]
                if v > best:
                    best = v
                    arg = i
            v = best + point[t, j]
            if c > 0:
                v += c * log_B[t, j]
            delta[t, j] = v
            bp[t, j] = arg
    last = first_argmax(delta[n - 1])
    return backtrack(bp, last, n), delta[n - 1, last]


@njit(cache=True)
def path_terms(path, log_pi, log_P, log_B):
    """Per-step terms of ln p(x, s): ln pi + ln f at t=0, ln P + ln f after."""
    n = path.shape[0]
    out = np.empty(n)
    out[0] = log_pi[path[0]] + log_B[0, path[0]]
    for t in range(1, n):
        out[t] = log_P[path[t - 1], path[t]] + log_B[t, path[t]]
    return out


@njit(cache=True)
def sample_chain(cum_init, cum_trans, u):
    n = u.shape[0]
    S = cum_init.shape[0]
    y = np.empty(n, dtype=np.int64)
    s = 0
    while s < S - 1 and u[0] >= cum_init[s]:
        s += 1
    y[0] = s
    for t in range(1, n):
        row = y[t - 1]
        s = 0
        while s < S - 1 and u[t] >= cum_trans[row, s]:
            s += 1
        y[t] = s
    return y
