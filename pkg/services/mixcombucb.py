# services/mixcombucb.py
"""
Semi-bandit feedback: covering initialization, UCB indices, a forced-sampling
mixture over the covering super arms, and inverse-propensity accumulators.

π_t(M) = (1 − m0 α_t)·𝕀{M = M̃(t)} + Σ_k α_t·𝕀{M = M_k},  α_t = 1/(m0 t^α)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from numbers import Integral, Real
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.utils import check_scalar

from config import LARGE_GAP_THRESHOLD
from services.instance import (
    BanditInstance,
    SuperArmFamily,
    has_large_gap,
    sample_reward,
    solve_oracle,
)
from utils.errors import DomainError, FamilyError
from utils.text import format_arm

log = logging.getLogger(__name__)


@dataclass
class UCBState:
    family: SuperArmFamily
    alpha: float
    w_hat: np.ndarray
    T: np.ndarray
    acc: np.ndarray
    forced: List[Tuple[int, int]]  # (base arm e, covering super arm index M_e)
    forced_count: np.ndarray  # per base arm: number of pairs k with e ∈ M_k
    covered: np.ndarray  # E, sorted base-arm indices
    init_arms: List[int]
    t: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def m0(self) -> int:
        return len(self.forced)


@dataclass(frozen=True)
class MixtureRecord:
    """Everything needed to reproduce π_t and the inclusion probabilities."""

    t: int
    ucb_arm: int
    alpha_t: float
    m0: int
    ucb_members: np.ndarray  # mask of M̃(t)
    forced_count: np.ndarray
    forced_arms: Tuple[int, ...]
    selected: int = -1


class UCBTrace(NamedTuple):
    t: int
    arm: int
    alpha_t: float
    ucb_arm: int


@dataclass
class UCBRun:
    chosen: np.ndarray  # initialization calls first, then main rounds
    snapshots: List[Tuple[int, int, np.ndarray, np.ndarray]]  # (t, rounds, super, base)
    tracked: np.ndarray
    estimable: np.ndarray
    warnings: List[str]
    init_calls: int = 0


def init_ucb(
    family: SuperArmFamily,
    env: BanditInstance,
    rng: np.random.Generator,
    alpha: float = 0.0,
) -> UCBState:
    """
    Call the oracle on the binary vector u until every coverable base arm has
    been observed once; each newly observed e records (e, M_e). alpha sets the
    decay of the forced-sampling weight α_t for the rounds that follow.
    """
    check_scalar(alpha, "alpha", Real, min_val=0.0)
    if len(family) == 0:
        raise FamilyError("family has no super arms")
    d = family.d
    u = np.ones(d)
    w_hat = np.zeros(d)
    T = np.zeros(d, dtype=int)
    forced: List[Tuple[int, int]] = []
    init_arms: List[int] = []
    warnings: List[str] = []

    while u.any():
        idx, value = solve_oracle(family, u)
        if value <= 0.0:
            missing = [int(e) for e in np.flatnonzero(u)]
            msg = f"base arms {format_arm(missing)} are in no super arm and are dropped from E"
            log.warning(msg)
            warnings.append(msg)
            break
        w = sample_reward(rng, env)
        init_arms.append(idx)
        for e in family.arms[idx]:
            if u[e] == 1.0:
                w_hat[e] = w[e]
                T[e] = 1
                u[e] = 0.0
                forced.append((e, idx))

    forced_count = np.zeros(d, dtype=int)
    for _, arm in forced:
        forced_count[list(family.arms[arm])] += 1

    log.debug("InitUCB: %d oracle calls, m0=%d", len(init_arms), len(forced))
    return UCBState(
        family=family,
        alpha=float(alpha),
        w_hat=w_hat,
        T=T,
        acc=np.zeros(d),
        forced=forced,
        forced_count=forced_count,
        covered=np.asarray(sorted(e for e, _ in forced), dtype=int),
        init_arms=init_arms,
        t=len(forced) - 1,
        warnings=warnings,
    )


def confidence_radius(t: int, s: int) -> float:
    """c_{t,s} = √(2 ln t / s)."""
    if s < 1:
        raise DomainError(f"confidence radius needs s >= 1, got {s}")
    if t < 1:
        raise DomainError(f"confidence radius needs t >= 1, got {t}")
    return math.sqrt(2.0 * math.log(t) / s)


def ucb_select(state: UCBState, rng: np.random.Generator) -> Tuple[int, MixtureRecord]:
    t = state.t + 1
    m0 = state.m0
    alpha_t = 1.0 / (m0 * float(t) ** state.alpha)

    index = np.zeros(state.family.d)
    for e in state.covered:
        # c_{t-1,·}; t-1 = 0 only when m0 = 1, log 1 keeps the radius at 0
        index[e] = state.w_hat[e] + confidence_radius(max(t - 1, 1), int(state.T[e]))
    ucb_arm, _ = solve_oracle(state.family, index)

    members = state.family.vectors[ucb_arm] > 0
    forced_arms = tuple(arm for _, arm in state.forced)
    exploit_mass = 1.0 - m0 * alpha_t

    r = rng.random()
    if r < exploit_mass:
        selected = ucb_arm
    else:
        k = min(int((r - exploit_mass) / alpha_t), m0 - 1)
        selected = forced_arms[k]

    record = MixtureRecord(
        t=t,
        ucb_arm=ucb_arm,
        alpha_t=alpha_t,
        m0=m0,
        ucb_members=members,
        forced_count=state.forced_count,
        forced_arms=forced_arms,
        selected=selected,
    )
    return selected, record


def mixture_distribution(record: MixtureRecord) -> Dict[int, float]:
    """π_t as {arm index: probability}; duplicate covering arms accumulate."""
    pi: Dict[int, float] = {}
    exploit = 1.0 - record.m0 * record.alpha_t
    if exploit > 0.0:
        pi[record.ucb_arm] = exploit
    for arm in record.forced_arms:
        pi[arm] = pi.get(arm, 0.0) + record.alpha_t
    return pi


def inclusion_prob(record: MixtureRecord, e: int) -> float:
    """ℙ(e ∈ M(t)) = (1 − m0 α_t)·𝕀{e ∈ M̃(t)} + α_t·|{k : e ∈ M_k}|."""
    if not 0 <= e < record.forced_count.size or record.forced_count[e] == 0:
        raise DomainError(f"base arm {e} is not covered")
    exploit = (1.0 - record.m0 * record.alpha_t) if record.ucb_members[e] else 0.0
    return exploit + record.alpha_t * float(record.forced_count[e])


def ucb_update(state: UCBState, observed: Mapping[int, float], record: MixtureRecord) -> None:
    expected = set(state.family.arms[record.selected]) if record.selected >= 0 else None
    if expected is not None and set(int(e) for e in observed) != expected:
        raise DomainError(
            f"observed {format_arm(sorted(observed))} but played {format_arm(sorted(expected))}"
        )
    for e, w in observed.items():
        e = int(e)
        prob = inclusion_prob(record, e)
        state.acc[e] += w / prob
        prev = state.T[e]
        state.T[e] = prev + 1
        state.w_hat[e] = (prev * state.w_hat[e] + w) / state.T[e]
    state.t = record.t


def ucb_estimates(state: UCBState, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(Δ̂_M over all arms, Δ̂_μ over 𝓜_UCB)."""
    sums = state.family.vectors @ state.acc
    base = state.acc[state.covered]
    return (sums[:, None] - sums[None, :]) / n, (base[:, None] - base[None, :]) / n


def alpha_warnings(inst: BanditInstance, alpha: float) -> List[str]:
    """α = 0 degenerates the mixture; α beyond ½ needs the large-gap property."""
    out = []
    if alpha == 0.0:
        out.append(
            "alpha=0: m0*alpha_t = 1, the UCB arm is only played when it is also a covering arm"
        )
    if alpha > 1.0:
        out.append(f"alpha={alpha} is outside [0, 1]; the Pareto guarantee does not apply")
    elif alpha > 0.5 and not has_large_gap(inst, LARGE_GAP_THRESHOLD):
        out.append(
            f"alpha={alpha} > 1/2 without the large-gap property "
            f"(threshold {LARGE_GAP_THRESHOLD}); the Pareto guarantee does not apply"
        )
    return out


def run_mixcombucb(
    inst: BanditInstance,
    n: int,
    alpha: float,
    rng: np.random.Generator,
    checkpoints: Sequence[int] = (),
    trace: Optional[Callable[[UCBTrace], None]] = None,
) -> UCBRun:
    """
    InitUCB followed by rounds t = m0 … n. Initialization calls are charged as
    extra rounds; checkpoints before m0 report the post-initialization state.
    """
    check_scalar(n, "n", Integral, min_val=1)
    state = init_ucb(inst.family, inst, rng, alpha=alpha)
    for msg in alpha_warnings(inst, alpha):
        log.warning(msg)
        state.warnings.append(msg)

    marks = sorted(set(int(c) for c in checkpoints))
    chosen: List[int] = list(state.init_arms)
    snapshots = []

    def snapshot(t: int) -> None:
        super_est, base_est = ucb_estimates(state, t)
        snapshots.append((t, len(chosen), super_est, base_est))

    for t in marks:
        if t < state.m0:
            snapshot(t)
    pending = set(t for t in marks if t >= state.m0)

    for t in range(state.m0, n + 1):
        arm, record = ucb_select(state, rng)
        w = sample_reward(rng, inst)
        ucb_update(state, {e: float(w[e]) for e in inst.family.arms[arm]}, record)
        chosen.append(arm)
        if trace is not None:
            trace(UCBTrace(t=t, arm=arm, alpha_t=record.alpha_t, ucb_arm=record.ucb_arm))
        if t in pending:
            snapshot(t)

    return UCBRun(
        chosen=np.asarray(chosen, dtype=int),
        snapshots=snapshots,
        tracked=np.arange(len(inst.family)),
        estimable=state.covered,
        warnings=state.warnings,
        init_calls=len(state.init_arms),
    )
