# services/instance.py
"""
Bandit instances: super-arm families, reward sampling, the exact
combinatorial oracle and ground-truth gap tables.

Base arms are 0-indexed in memory; JSON files and printed arms are 1-indexed
(see services/family_store.py and utils/text.format_arm).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from numbers import Integral
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.utils import check_scalar

from config import MAX_ARMS
from utils.errors import DomainError, FamilyError, SizingError
from utils.geometry import vectorize

log = logging.getLogger(__name__)

NOISE_LAWS = ("bernoulli", "uniform")
UNIFORM_HALF_WIDTH = 0.1
ORACLE_TIE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SuperArmFamily:
    d: int
    arms: Tuple[Tuple[int, ...], ...]
    uniform_size: Optional[int] = None

    def __post_init__(self):
        if self.d < 1:
            raise FamilyError("d must be positive")
        if not self.arms:
            raise FamilyError("family has no super arms")
        if len(self.arms) > MAX_ARMS:
            raise SizingError(f"{len(self.arms)} arms exceed the enumeration guard {MAX_ARMS}")
        seen = set()
        for arm in self.arms:
            if not arm:
                raise FamilyError("super arms must be non-empty")
            if len(set(arm)) != len(arm) or any(not 0 <= e < self.d for e in arm):
                raise FamilyError(f"invalid super arm {arm} for d={self.d}")
            key = tuple(sorted(arm))
            if key in seen:
                raise FamilyError(f"duplicate super arm {key}")
            seen.add(key)
            if self.uniform_size is not None and len(arm) != self.uniform_size:
                raise FamilyError(f"arm {arm} does not have size {self.uniform_size}")

    def __len__(self) -> int:
        return len(self.arms)

    @cached_property
    def vectors(self) -> np.ndarray:
        """(K, d) matrix of indicator vectors θ_M."""
        return np.vstack([vectorize(arm, self.d) for arm in self.arms])

    @cached_property
    def arm_index(self) -> Dict[Tuple[int, ...], int]:
        return {tuple(sorted(arm)): i for i, arm in enumerate(self.arms)}

    @cached_property
    def is_complete_uniform(self) -> bool:
        """True when the family holds every subset of size m."""
        m = self.uniform_size
        return m is not None and len(self.arms) == math.comb(self.d, m)

    @property
    def max_size(self) -> int:
        return max(len(arm) for arm in self.arms)

    def covered(self) -> np.ndarray:
        """Mask of base arms contained in at least one super arm."""
        return self.vectors.sum(axis=0) > 0


@dataclass(frozen=True)
class BanditInstance:
    family: SuperArmFamily
    mu: np.ndarray
    noise: str = "bernoulli"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.family.d,):
            raise FamilyError(f"mu must have length d={self.family.d}")
        if np.any(~np.isfinite(mu)) or np.any(mu < 0.0) or np.any(mu > 1.0):
            raise DomainError("means must lie in [0, 1]")
        if self.noise not in NOISE_LAWS:
            raise FamilyError(f"unknown reward law {self.noise!r}")
        object.__setattr__(self, "mu", mu)

    @property
    def d(self) -> int:
        return self.family.d


@dataclass(frozen=True)
class GapTables:
    super_gap: np.ndarray  # (K, K), Δ_M^{(i,j)} = f(M_i) - f(M_j)
    base_gap: np.ndarray  # (d, d), Δ_μ^{(i,j)} = μ(i) - μ(j)
    opt_gap: np.ndarray  # (K,), Δ_M
    best_index: int
    values: np.ndarray = field(repr=False, default=None)  # f(M, μ) per arm


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------
def make_family_from_arms(d: int, arms: Iterable[Iterable[int]]) -> SuperArmFamily:
    """Explicit family; uniform_size is set when all arms share one size."""
    normalized = tuple(tuple(sorted(int(e) for e in arm)) for arm in arms)
    sizes = {len(arm) for arm in normalized}
    uniform = sizes.pop() if len(sizes) == 1 else None
    return SuperArmFamily(d=d, arms=normalized, uniform_size=uniform)


def make_uniform_matroid(d: int, m: int) -> SuperArmFamily:
    """All subsets of exactly m base arms, lexicographic order."""
    check_scalar(d, "d", Integral, min_val=1)
    check_scalar(m, "m", Integral, min_val=1)
    if m > d:
        raise SizingError(f"m={m} exceeds d={d}")
    count = math.comb(d, m)
    if count > MAX_ARMS:
        raise SizingError(f"C({d},{m})={count} arms exceed the enumeration guard {MAX_ARMS}")
    arms = tuple(itertools.combinations(range(d), m))
    return SuperArmFamily(d=d, arms=arms, uniform_size=m)


def make_restricted_family(d0: int) -> SuperArmFamily:
    """{1}, {2}, {3,4}, …, {2d0−1, 2d0} over d = 2·d0 base arms."""
    check_scalar(d0, "d0", Integral, min_val=1)
    arms = [(0,), (1,)] + [(2 * k, 2 * k + 1) for k in range(1, d0)]
    return SuperArmFamily(d=2 * d0, arms=tuple(arms), uniform_size=None)


def make_perfect_matchings(m: int) -> SuperArmFamily:
    """
    Perfect matchings of K_{m,m}. Edge (i, j) is base arm i·m + j, so
    d = m² and |𝓜| = m!.
    """
    check_scalar(m, "m", Integral, min_val=1)
    if math.factorial(m) > MAX_ARMS:
        raise SizingError(f"{m}! matchings exceed the enumeration guard {MAX_ARMS}")
    arms = tuple(
        tuple(i * m + perm[i] for i in range(m)) for perm in itertools.permutations(range(m))
    )
    return SuperArmFamily(d=m * m, arms=arms, uniform_size=m)


def make_instance(
    family: SuperArmFamily, mu: Sequence[float], noise: str = "bernoulli"
) -> BanditInstance:
    return BanditInstance(family=family, mu=np.asarray(mu, dtype=float), noise=noise)


def make_hard_pair(zeta: float, g: float) -> Tuple[BanditInstance, BanditInstance]:
    """
    Two 2-arm Bernoulli instances on {{1},{2}}: arm 2 has mean ½ in the
    first and ½ + 2g in the second, arm 1 has ½ − ζ in both.
    """
    if not 0.0 <= zeta < 1.0:
        raise DomainError(f"zeta must lie in [0, 1), got {zeta}")
    if not 0.0 <= g <= 0.125:
        raise DomainError(f"g must lie in [0, 1/8], got {g}")
    if 0.5 - zeta < 0.0:
        raise DomainError(f"zeta={zeta} gives a negative mean for arm 1")
    family = make_family_from_arms(2, [(0,), (1,)])
    first = make_instance(family, [0.5 - zeta, 0.5])
    second = make_instance(family, [0.5 - zeta, 0.5 + 2.0 * g])
    return first, second


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------
def sample_means(rng: np.random.Generator, d: int, lo: float, hi: float) -> np.ndarray:
    """d independent U[lo, hi] draws."""
    check_scalar(d, "d", Integral, min_val=1)
    if not 0.0 <= lo < hi <= 1.0:
        raise DomainError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, size=d)


def sample_reward(rng: np.random.Generator, inst: BanditInstance) -> np.ndarray:
    """
    One reward vector w_t ∈ [0,1]^d with E[w_t] = μ, independent coordinates.

    "bernoulli": w(e) ~ B(μ(e)).
    "uniform": w(e) ~ U[μ(e) − h, μ(e) + h], h = min(0.1, μ(e), 1 − μ(e)),
    so the support stays in [0, 1] without shifting the mean.
    """
    mu = inst.mu
    if inst.noise == "bernoulli":
        return (rng.random(mu.size) < mu).astype(float)
    half = np.minimum(UNIFORM_HALF_WIDTH, np.minimum(mu, 1.0 - mu))
    return mu + half * (2.0 * rng.random(mu.size) - 1.0)


# ---------------------------------------------------------------------------
# Oracle and ground truth
# ---------------------------------------------------------------------------
def f_value(family: SuperArmFamily, weights: Sequence[float]) -> np.ndarray:
    """f(M, w) = Σ_{e∈M} w(e) for every arm."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (family.d,):
        raise DomainError(f"weights must have length d={family.d}")
    return family.vectors @ w


def solve_oracle(family: SuperArmFamily, weights: Sequence[float]) -> Tuple[int, float]:
    """argmax_M f(M, w); ties go to the lowest family index."""
    if len(family) == 0:
        raise FamilyError("family has no super arms")
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)):
        raise DomainError("oracle weights must be finite")
    values = f_value(family, w)
    best = float(values.max())
    idx = int(np.flatnonzero(values >= best - ORACLE_TIE_TOL * max(1.0, abs(best)))[0])
    return idx, float(values[idx])


def true_gaps(inst: BanditInstance) -> GapTables:
    values = f_value(inst.family, inst.mu)
    best_index, _ = solve_oracle(inst.family, inst.mu)
    opt_gap = np.maximum(values[best_index] - values, 0.0)
    opt_gap[best_index] = 0.0
    return GapTables(
        super_gap=values[:, None] - values[None, :],
        base_gap=inst.mu[:, None] - inst.mu[None, :],
        opt_gap=opt_gap,
        best_index=best_index,
        values=values,
    )


def _eligible_base_arms(inst: BanditInstance, gaps: GapTables) -> List[int]:
    best = set(inst.family.arms[gaps.best_index])
    suboptimal = gaps.opt_gap > 0.0
    covered = inst.family.vectors[suboptimal].sum(axis=0) > 0
    return [e for e in range(inst.d) if e not in best and covered[e]]


def min_gap(inst: BanditInstance, e: int, gaps: Optional[GapTables] = None) -> float:
    """
    Δ_{e,min} = f(M*, μ) − max{ f(M, μ) : e ∈ M, Δ_M > 0 } for e ∉ M*.
    """
    gaps = gaps if gaps is not None else true_gaps(inst)
    if not 0 <= e < inst.d:
        raise DomainError(f"base arm {e} out of range")
    if e in inst.family.arms[gaps.best_index]:
        raise DomainError(f"base arm {e} belongs to the optimal super arm")
    mask = (inst.family.vectors[:, e] > 0) & (gaps.opt_gap > 0.0)
    if not mask.any():
        raise DomainError(f"base arm {e} is not contained in any suboptimal super arm")
    return float(gaps.values[gaps.best_index] - gaps.values[mask].max())


def large_gap_report(inst: BanditInstance) -> Optional[float]:
    """Smallest Δ_{e,min} over eligible base arms (None if there are none)."""
    gaps = true_gaps(inst)
    eligible = _eligible_base_arms(inst, gaps)
    if not eligible:
        return None
    return min(min_gap(inst, e, gaps) for e in eligible)


def has_large_gap(inst: BanditInstance, threshold: float) -> bool:
    report = large_gap_report(inst)
    return report is None or report >= threshold
