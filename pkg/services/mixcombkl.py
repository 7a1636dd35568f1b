# services/mixcombkl.py
"""
Full-bandit feedback: online stochastic mirror descent with KL projection,
γ-mixing with ρ⁰ and forced uniform exploration with probability 1/(2t^α).

On forced (U_t = 1) rounds the importance-weighted estimate
2t^α · θᵀ Σ_unif⁺ θ_{M(t)} f(M(t), w_t) is added to every tracked super arm
and every estimable singleton; gap estimates are accumulator differences / n.

Usage:
    state = init_kl_state(family, n=5000, alpha=0.5)
    arm, u_flag, record = kl_select(state, rng)
    kl_update(state, observed_total, arm, u_flag)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from numbers import Integral, Real
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.utils import check_scalar

from config import MAX_TRACKED_ARMS
from services.instance import BanditInstance, SuperArmFamily, sample_reward
from utils.errors import DomainError, FamilyError, ParameterRangeError, StateError
from utils.geometry import (
    SparseArmDistribution,
    SpectralConstants,
    decompose,
    estimable_base_arms,
    kl_project_weighted,
    projection_accuracy,
    pseudo_inverse,
    spectral_constants,
)

log = logging.getLogger(__name__)

PARETO_ALPHA_RANGE = (0.0, 0.5)
# exp() of a large negative step underflows; kl_project needs q̃ > 0
Q_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class KLParams:
    alpha: float
    C: float
    gamma: float
    eta: float
    n: int
    m: int
    d: int
    warnings: Tuple[str, ...] = ()


@dataclass
class SelectionRecord:
    """What kl_select used to draw M(t)."""

    t: int
    u_flag: int
    explore_prob: float
    mixture: Optional[SparseArmDistribution]  # None on uniform rounds


class KLTrace(NamedTuple):
    t: int
    u_flag: int
    arm: int
    observed_total: float


@dataclass
class KLState:
    family: SuperArmFamily
    params: KLParams
    constants: SpectralConstants
    q: np.ndarray
    tracked: np.ndarray  # super-arm indices with accumulators
    estimable: np.ndarray  # base arms in 𝓜_KL
    acc_super: np.ndarray
    acc_base: np.ndarray
    t: int = 0
    last_p: Optional[SparseArmDistribution] = None
    proj_weights: Optional[np.ndarray] = None  # vertex weights of q, reused as warm start
    warnings: List[str] = field(default_factory=list)


@dataclass
class KLRun:
    """Result of run_mixcombkl: the played arms and estimate snapshots."""

    chosen: np.ndarray
    snapshots: List[Tuple[int, int, np.ndarray, np.ndarray]]  # (t, rounds, super, base)
    tracked: np.ndarray
    estimable: np.ndarray
    warnings: List[str]
    explore_rounds: int = 0


def kl_params(
    constants: SpectralConstants,
    family: SuperArmFamily,
    n: int,
    alpha: float,
    strict: bool = False,
) -> KLParams:
    """
    C = λ_min m^{-3/2},
    γ = √(m log ρ_min⁻¹) / (√(m log ρ_min⁻¹) + √(C (C m² d + m) n)),
    η = γ C.
    """
    check_scalar(n, "n", Integral, min_val=1)
    check_scalar(alpha, "alpha", Real, min_val=0.0)
    if family.uniform_size is None:
        raise FamilyError("full-bandit feedback needs super arms of one common size m")
    if constants.rho_min <= 0.0:
        raise FamilyError("every base arm must belong to some super arm")

    warnings: List[str] = []
    lo, hi = PARETO_ALPHA_RANGE
    if not lo <= alpha <= hi:
        msg = f"alpha={alpha} is outside [{lo}, {hi}]; the Pareto guarantee does not apply"
        if strict:
            raise ParameterRangeError(msg)
        log.warning(msg)
        warnings.append(msg)

    m, d = family.uniform_size, family.d
    c = constants.lambda_min * m ** -1.5
    explore = math.sqrt(m * math.log(1.0 / constants.rho_min))
    exploit = math.sqrt(c * (c * m * m * d + m) * n)
    gamma = explore / (explore + exploit)
    return KLParams(
        alpha=float(alpha),
        C=c,
        gamma=gamma,
        eta=gamma * c,
        n=int(n),
        m=m,
        d=d,
        warnings=tuple(warnings),
    )


def init_kl_state(
    family: SuperArmFamily,
    n: int,
    alpha: float,
    strict: bool = False,
    tracked: Optional[Sequence[int]] = None,
) -> KLState:
    constants = spectral_constants(family)
    params = kl_params(constants, family, n, alpha, strict=strict)

    if tracked is None:
        if len(family) > MAX_TRACKED_ARMS:
            raise DomainError(
                f"{len(family)} super arms exceed {MAX_TRACKED_ARMS}; pass the indices to track"
            )
        tracked_idx = np.arange(len(family))
    else:
        tracked_idx = np.asarray(sorted(set(int(i) for i in tracked)), dtype=int)
        if tracked_idx.size and not 0 <= tracked_idx.min() <= tracked_idx.max() < len(family):
            raise DomainError("tracked arm index out of range")

    estimable = np.asarray(estimable_base_arms(family), dtype=int)
    return KLState(
        family=family,
        params=params,
        constants=constants,
        q=constants.rho0.copy(),
        tracked=tracked_idx,
        estimable=estimable,
        acc_super=np.zeros(tracked_idx.size),
        acc_base=np.zeros(estimable.size),
        warnings=list(params.warnings),
    )


def explore_probability(t: int, alpha: float) -> float:
    """P(U_t = 1) = 1 / (2 t^α)."""
    return 0.5 / float(t) ** alpha


def kl_select(state: KLState, rng: np.random.Generator) -> Tuple[int, int, SelectionRecord]:
    t = state.t + 1
    prob = explore_probability(t, state.params.alpha)
    if rng.random() < prob:
        arm = int(rng.integers(len(state.family)))
        return arm, 1, SelectionRecord(t=t, u_flag=1, explore_prob=prob, mixture=None)

    gamma = state.params.gamma
    q_mix = (1.0 - gamma) * state.q + gamma * state.constants.rho0
    p = decompose(state.family, state.params.m * q_mix)
    state.last_p = p
    arm = p.sample(rng)
    return arm, 0, SelectionRecord(t=t, u_flag=0, explore_prob=prob, mixture=p)


def kl_update(state: KLState, observed_total: float, arm: int, u_flag: int) -> None:
    m = state.params.m
    if not -1e-12 <= observed_total <= m + 1e-12:
        raise DomainError(f"observed total {observed_total} outside [0, {m}]")
    t = state.t + 1
    theta = state.family.vectors[arm]

    if u_flag:
        w_tilde = observed_total * (state.constants.sigma_unif_pinv @ theta)
        scale = 2.0 * float(t) ** state.params.alpha
        state.acc_super += scale * (state.family.vectors[state.tracked] @ w_tilde)
        state.acc_base += scale * w_tilde[state.estimable]
    else:
        if state.last_p is None:
            raise StateError("kl_update on an exploitation round without a preceding kl_select")
        sigma = state.last_p.second_moment(state.family.vectors)
        w_tilde = observed_total * (pseudo_inverse(sigma) @ theta)
        # exponentiated gradient, normalised over j
        logits = np.log(state.q) + state.params.eta * w_tilde
        logits -= logits.max()
        q_tilde = np.maximum(np.exp(logits), Q_FLOOR)
        q_tilde /= q_tilde.sum()
        state.q, state.proj_weights = kl_project_weighted(
            state.family, q_tilde, projection_accuracy(t), warm_start=state.proj_weights
        )

    state.t = t


def _pairwise(acc: np.ndarray, n: float) -> np.ndarray:
    return (acc[:, None] - acc[None, :]) / n


def kl_estimates(state: KLState, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(Δ̂_M over tracked arms, Δ̂_μ over 𝓜_KL) after n rounds."""
    if state.t < n:
        raise StateError(f"only {state.t} of {n} rounds completed")
    return _pairwise(state.acc_super, n), _pairwise(state.acc_base, n)


def run_mixcombkl(
    inst: BanditInstance,
    n: int,
    alpha: float,
    rng: np.random.Generator,
    checkpoints: Sequence[int] = (),
    trace: Optional[Callable[[KLTrace], None]] = None,
    strict: bool = False,
    tracked: Optional[Sequence[int]] = None,
) -> KLRun:
    """Play n rounds against ``inst`` and snapshot estimates at ``checkpoints``."""
    state = init_kl_state(inst.family, n, alpha, strict=strict, tracked=tracked)
    marks = set(int(c) for c in checkpoints)
    chosen = np.empty(n, dtype=int)
    snapshots = []
    explore_rounds = 0

    for t in range(1, n + 1):
        arm, u_flag, _ = kl_select(state, rng)
        w = sample_reward(rng, inst)
        total = float(state.family.vectors[arm] @ w)
        kl_update(state, total, arm, u_flag)
        chosen[t - 1] = arm
        explore_rounds += u_flag
        if trace is not None:
            trace(KLTrace(t=t, u_flag=u_flag, arm=arm, observed_total=total))
        if t in marks:
            super_est, base_est = kl_estimates(state, t)
            snapshots.append((t, t, super_est, base_est))

    log.debug("MixCombKL: %d of %d rounds explored uniformly", explore_rounds, n)
    return KLRun(
        chosen=chosen,
        snapshots=snapshots,
        tracked=state.tracked,
        estimable=state.estimable,
        warnings=state.warnings,
        explore_rounds=explore_rounds,
    )
