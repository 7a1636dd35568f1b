# utils/metrics.py
"""Regret, MSE of gap tables, maximum pairwise error and the Pareto product."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import numpy as np

from utils.errors import DomainError

if TYPE_CHECKING:
    from services.instance import GapTables


@dataclass(frozen=True)
class Checkpoint:
    t: int
    cum_regret: float
    mse_mu: float
    mse_M: float
    max_err_mu: float
    max_err_M: float
    pareto_product: float


def regret(chosen: Sequence[int], gaps: "GapTables") -> float:
    """Cumulative pseudo-regret Σ_t Δ_{M(t)} of a trace of arm indices."""
    opt_gap = gaps.opt_gap
    idx = np.asarray(chosen, dtype=int)
    if idx.size == 0:
        return 0.0
    if idx.min() < 0 or idx.max() >= opt_gap.size:
        raise DomainError("arm index out of range")
    return float(np.sum(opt_gap[idx]))


def _upper_errors(est: np.ndarray, truth: np.ndarray, k: int) -> np.ndarray:
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != (k, k) or truth.shape != (k, k):
        raise DomainError(f"expected {k}x{k} tables, got {est.shape} and {truth.shape}")
    iu = np.triu_indices(k, 1)
    return (est - truth)[iu]


def mse_mu(est: np.ndarray, truth: np.ndarray, d: int) -> float:
    """(2 / (d(d−1))) Σ_{i<j} (Δ̂ − Δ)² over the d estimable base arms."""
    if d < 2:
        return float("nan")
    err = _upper_errors(est, truth, d)
    return float(2.0 / (d * (d - 1)) * np.sum(err**2))


def mse_M(est: np.ndarray, truth: np.ndarray, K: int) -> float:
    """(2 / (K² − K)) Σ_{i<j} (Δ̂ − Δ)² over K super arms."""
    if K < 2:
        return float("nan")
    err = _upper_errors(est, truth, K)
    return float(2.0 / (K * K - K) * np.sum(err**2))


def max_pairwise_error(est: np.ndarray, truth: np.ndarray) -> float:
    k = np.asarray(est).shape[0]
    if k < 2:
        return float("nan")
    return float(np.max(np.abs(_upper_errors(est, truth, k))))


def pareto_product(max_err: float, regret_value: float) -> float:
    """max_err · √regret."""
    if math.isnan(max_err) or math.isnan(regret_value):
        return float("nan")
    if max_err < 0.0 or regret_value < 0.0:
        raise DomainError("pareto_product needs nonnegative arguments")
    return max_err * math.sqrt(regret_value)


def make_checkpoint(
    t: int,
    cum_regret: float,
    est_super: np.ndarray,
    est_base: np.ndarray,
    true_super: np.ndarray,
    true_base: np.ndarray,
) -> Checkpoint:
    """Metrics of one snapshot; truth tables must already be restricted."""
    k = est_super.shape[0]
    k_base = est_base.shape[0]
    max_err_M = max_pairwise_error(est_super, true_super)
    return Checkpoint(
        t=int(t),
        cum_regret=float(cum_regret),
        mse_mu=mse_mu(est_base, true_base, k_base),
        mse_M=mse_M(est_super, true_super, k),
        max_err_mu=max_pairwise_error(est_base, true_base),
        max_err_M=max_err_M,
        pareto_product=pareto_product(max_err_M, cum_regret),
    )


def aggregate(values: Sequence[float]) -> Tuple[float, Optional[float]]:
    """
    Mean and standard error in the given order (callers pass trial-index
    order); SE is None for a single value.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), None
    mean = float(np.mean(arr))
    if arr.size < 2:
        return mean, None
    return mean, float(np.std(arr, ddof=1) / math.sqrt(arr.size))
