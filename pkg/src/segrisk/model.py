"""HMM representation, validation, sampling and closed-form chain quantities.

States are 0-indexed throughout. The default RNG is numpy's PCG64 seeded
directly with the user seed, so a sample is a pure function of
``(model, n, seed)`` on every platform numpy supports.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels

STOCHASTIC_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model violates one or more invariants."""

    def __init__(self, issues: list[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


@dataclass(frozen=True, eq=False)
class Categorical:
    probs: np.ndarray  # |S| x K

    @property
    def alphabet_size(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True, eq=False)
class Gaussian:
    means: np.ndarray
    stds: np.ndarray


Emission = Union[Categorical, Gaussian]


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Finite-state HMM with categorical or univariate Gaussian emissions.

    ``initial`` is either an explicit probability vector or the string
    ``"stationary"``; :attr:`initial_distribution` always resolves it.
    """

    transition: np.ndarray
    emission: Emission
    initial: Union[np.ndarray, str] = "stationary"

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.emission, Categorical)

    @property
    def initial_distribution(self) -> np.ndarray:
        if isinstance(self.initial, str):
            return stationary_distribution(self.transition)
        return self.initial

    @property
    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    @property
    def log_initial(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.initial_distribution)

    def emission_density(self, x) -> np.ndarray:
        """Return the n x |S| matrix f_s(x_t)."""
        return np.exp(self.log_emission(x))

    def log_emission(self, x) -> np.ndarray:
        """Return the n x |S| matrix ln f_s(x_t) (``-inf`` where f_s(x_t) = 0)."""
        em = self.emission
        if isinstance(em, Categorical):
            x = np.asarray(x, dtype=np.int64)
            if x.size and (x.min() < 0 or x.max() >= em.alphabet_size):
                raise ValueError(
                    f"observations must lie in [0, {em.alphabet_size}), got range "
                    f"[{x.min()}, {x.max()}]"
                )
            with np.errstate(divide="ignore"):
                logf = np.log(em.probs)
            return np.ascontiguousarray(logf[:, x].T)
        x = np.asarray(x, dtype=np.float64)
        z = (x[:, None] - em.means[None, :]) / em.stds[None, :]
        return -0.5 * z * z - np.log(em.stds)[None, :] - 0.5 * math.log(2 * math.pi)

    def to_dict(self) -> dict:
        if isinstance(self.emission, Categorical):
            emission = {"type": "categorical", "probs": self.emission.probs.tolist()}
        else:
            emission = {
                "type": "gaussian",
                "means": self.emission.means.tolist(),
                "stds": self.emission.stds.tolist(),
            }
        initial = self.initial if isinstance(self.initial, str) else self.initial.tolist()
        return {
            "states": self.num_states,
            "transition": self.transition.tolist(),
            "initial": initial,
            "emission": emission,
        }

    def model_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def model_from_dict(data: dict, require_ergodic: bool = True) -> HmmModel:
    """Build a model from the JSON schema and validate it.

    ``require_ergodic=False`` skips only the irreducible/aperiodic check, so
    assumption diagnostics can still be run on such chains.
    """
    try:
        transition = np.asarray(data["transition"], dtype=np.float64)
        em = data["emission"]
        kind = em["type"]
        if kind == "categorical":
            emission: Emission = Categorical(np.asarray(em["probs"], dtype=np.float64))
        elif kind == "gaussian":
            emission = Gaussian(
                np.asarray(em["means"], dtype=np.float64),
                np.asarray(em["stds"], dtype=np.float64),
            )
        else:
            raise ModelValidationError([f"unknown emission type {kind!r}"])
        initial = data.get("initial", "stationary")
        if not isinstance(initial, str):
            initial = np.asarray(initial, dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise ModelValidationError([f"malformed model JSON: {exc!r}"]) from exc
    model = HmmModel(transition, emission, initial)
    if "states" in data and int(data["states"]) != transition.shape[0]:
        raise ModelValidationError(
            [f"'states' is {data['states']} but transition is {transition.shape[0]}x{transition.shape[0]}"]
        )
    return validate_model(model, require_ergodic)


def load_model(path, require_ergodic: bool = True) -> HmmModel:
    with open(Path(path)) as fh:
        return model_from_dict(json.load(fh), require_ergodic)


# -- chain structure ---------------------------------------------------------

def primitivity_exponent(mask: np.ndarray) -> int | None:
    """Smallest r >= 1 with (mask^r) entrywise positive, or None.

    Boolean powering up to the Wielandt bound (m-1)^2 + 1.
    """
    a = np.asarray(mask, dtype=bool)
    m = a.shape[0]
    if m == 0:
        return None
    bound = (m - 1) ** 2 + 1
    power = a.copy()
    ai = a.astype(np.int64)
    for r in range(1, bound + 1):
        if power.all():
            return r
        power = (power.astype(np.int64) @ ai) > 0
    return None


def is_irreducible(mask: np.ndarray) -> bool:
    a = np.asarray(mask, dtype=bool)
    m = a.shape[0]
    reach = a | np.eye(m, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(max(m, 2)))) + 1)):
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    return bool(reach.all())


def model_diagnostics(model: HmmModel, require_ergodic: bool = True) -> list[str]:
    """List every violated model invariant (empty when the model is valid)."""
    issues: list[str] = []
    P = np.asarray(model.transition)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return [f"transition must be square, got shape {P.shape}"]
    S = P.shape[0]
    if S < 2:
        issues.append(f"need at least 2 states, got {S}")
    if not np.all(np.isfinite(P)):
        issues.append("transition has non-finite entries")
        return issues
    for i, j in zip(*np.nonzero(P < 0)):
        issues.append(f"transition[{i},{j}] = {P[i, j]:g} is negative")
    for i, row_sum in enumerate(P.sum(axis=1)):
        if abs(row_sum - 1.0) > STOCHASTIC_TOL:
            issues.append(f"transition row {i}: row sum {row_sum:.12g}")
    if issues:
        return issues
    if require_ergodic:
        issues += chain_issues(P)

    if isinstance(model.initial, str):
        if model.initial != "stationary":
            issues.append(f"initial must be a vector or 'stationary', got {model.initial!r}")
    else:
        pi = np.asarray(model.initial)
        if pi.shape != (S,):
            issues.append(f"initial has shape {pi.shape}, expected ({S},)")
        elif np.any(pi < 0) or abs(pi.sum() - 1.0) > STOCHASTIC_TOL:
            issues.append(f"initial: row sum {pi.sum():.12g} or negative entries")

    em = model.emission
    if isinstance(em, Categorical):
        F = np.asarray(em.probs)
        if F.ndim != 2 or F.shape[0] != S:
            issues.append(f"categorical probs must have {S} rows, got shape {F.shape}")
        else:
            for i, j in zip(*np.nonzero(F < 0)):
                issues.append(f"emission probs[{i},{j}] = {F[i, j]:g} is negative")
            for s, row_sum in enumerate(F.sum(axis=1)):
                if abs(row_sum - 1.0) > STOCHASTIC_TOL:
                    issues.append(f"emission row {s}: row sum {row_sum:.12g}")
    elif isinstance(em, Gaussian):
        if em.means.shape != (S,) or em.stds.shape != (S,):
            issues.append(f"gaussian means/stds must have length {S}")
        elif not np.all(em.stds > 0) or not np.all(np.isfinite(em.means)):
            issues.append("gaussian stds must be positive and means finite")
    else:
        issues.append(f"unsupported emission family {type(em).__name__}")
    return issues


def chain_issues(P) -> list[str]:
    if not is_irreducible(P > 0):
        return ["transition is reducible"]
    if primitivity_exponent(P > 0) is None:
        return ["transition is periodic"]
    return []


def validate_model(model: HmmModel, require_ergodic: bool = True) -> HmmModel:
    issues = model_diagnostics(model, require_ergodic)
    if issues:
        raise ModelValidationError(issues)
    return model


def stationary_distribution(transition) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 by a direct linear solve plus one refinement."""
    P = np.asarray(transition, dtype=np.float64)
    S = P.shape[0]
    A = P.T - np.eye(S)
    A[-1, :] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("stationary distribution is not unique (singular system)") from exc
    pi = pi + np.linalg.solve(A, b - A @ pi)
    if np.any(pi <= 0):
        raise ValueError("stationary distribution has non-positive entries; chain is not irreducible")
    return pi / pi.sum()


def markov_entropy_rate(model_or_transition) -> float:
    """Entropy rate -sum_i pi_i sum_j P(i,j) ln P(i,j) of the stationary chain, in nats."""
    P = model_or_transition.transition if isinstance(model_or_transition, HmmModel) else np.asarray(
        model_or_transition, dtype=np.float64
    )
    pi = stationary_distribution(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(pi * plogp.sum(axis=1)).sum())


def expected_log_emission(model: HmmModel, s: int) -> float:
    """int ln f_s dP_s (negative differential/Shannon entropy of emission s)."""
    em = model.emission
    if isinstance(em, Categorical):
        f = em.probs[s]
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.where(f > 0, f * np.log(f), 0.0).sum())
    return -0.5 * math.log(2 * math.pi * em.stds[s] ** 2) - 0.5


# -- sampling ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledSample:
    x: np.ndarray
    y: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.y)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` (optionally a derived stream, e.g. a replicate index)."""
    if stream:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))
    return np.random.Generator(np.random.PCG64(seed))


def sample(model: HmmModel, n: int, seed: int, rng: np.random.Generator | None = None) -> LabeledSample:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = make_rng(seed) if rng is None else rng
    cum_init = np.cumsum(model.initial_distribution)
    cum_trans = np.cumsum(model.transition, axis=1)
    y = _kernels.sample_chain(cum_init, cum_trans, rng.random(n))
    em = model.emission
    if isinstance(em, Categorical):
        cum_em = np.cumsum(em.probs, axis=1)
        u = rng.random(n)
        x = (u[:, None] >= cum_em[y]).sum(axis=1)
        x = np.minimum(x, em.alphabet_size - 1).astype(np.int64)
    else:
        x = em.means[y] + em.stds[y] * rng.standard_normal(n)
    return LabeledSample(x=x, y=y, seed=seed)


# -- reference models ----------------------------------------------------------

def m2_model() -> HmmModel:
    """Two-state categorical test model used across the test-suite."""
    return HmmModel(
        transition=np.array([[0.9, 0.1], [0.2, 0.8]]),
        emission=Categorical(np.array([[0.8, 0.2], [0.3, 0.7]])),
    )


def identity_model(transition=None) -> HmmModel:
    """Identity-emission model: x_t = y_t, so nothing is hidden."""
    P = np.array([[0.9, 0.1], [0.2, 0.8]]) if transition is None else np.asarray(transition, float)
    return HmmModel(transition=P, emission=Categorical(np.eye(P.shape[0])))


def symmetric_loss(num_states: int) -> np.ndarray:
    return 1.0 - np.eye(num_states)


def check_loss(loss, num_states: int) -> np.ndarray:
    if loss is None:
        return symmetric_loss(num_states)
    loss = np.asarray(loss, dtype=np.float64)
    if loss.shape != (num_states, num_states):
        raise ValueError(f"loss must be {num_states}x{num_states}, got {loss.shape}")
    if np.any(loss < 0) or np.any(np.diag(loss) != 0):
        raise ValueError("loss must be nonnegative with zero diagonal")
    return loss
