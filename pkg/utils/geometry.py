# utils/geometry.py
"""
Convex and spectral helpers for the full-bandit algorithm.

Covers indicator vectors, second-moment matrices and their pseudo-inverse,
the problem constants (λ_min, ρ⁰, ρ_min), span-based estimability, the
decomposition of a point of Co(θ) into few super arms, and the KL projection
onto 𝒬 = Co(θ)/m.

Base arms are 0-indexed everywhere in this module.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq, nnls
from scipy.special import rel_entr

from config import PROJECTION_MAX_ITER
from utils.errors import DecompositionError, DomainError, FamilyError, ProjectionError

if TYPE_CHECKING:  # pragma: no cover
    from services.instance import SuperArmFamily

log = logging.getLogger(__name__)

EIG_CUTOFF = 1e-10  # relative to the largest eigenvalue
RANK_TOL = 1e-8
DECOMP_TOL = 1e-9
SYMMETRY_TOL = 1e-12
# Frank–Wolfe gaps below this are rounding noise at double precision
MIN_PROJECTION_EPS = 1e-8
# share of uniform weight mixed into a warm start so every vertex stays active
WARM_START_MIX = 1e-6


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ThetaMatrix:
    rows: np.ndarray  # (K, d) 0/1 indicator vectors θ_M
    m: Optional[int] = None

    @property
    def sizes(self) -> np.ndarray:
        return self.rows.sum(axis=1)


@dataclass(frozen=True)
class SpectralConstants:
    lambda_min: float
    rho0: np.ndarray
    rho_min: float
    sigma_unif_pinv: np.ndarray
    m: int


@dataclass(frozen=True)
class SparseArmDistribution:
    """Distribution over super arms with small support: (arm index, weight) pairs."""

    arms: np.ndarray  # int indices into the family
    weights: np.ndarray  # > 0, sums to 1

    @property
    def pairs(self) -> List[Tuple[int, float]]:
        return [(int(a), float(w)) for a, w in zip(self.arms, self.weights)]

    def __len__(self) -> int:
        return len(self.arms)

    def sample(self, rng: np.random.Generator) -> int:
        k = int(np.searchsorted(np.cumsum(self.weights), rng.random(), side="right"))
        return int(self.arms[min(k, len(self.arms) - 1)])

    def mean_vector(self, rows: np.ndarray) -> np.ndarray:
        return self.weights @ rows[self.arms]

    def second_moment(self, rows: np.ndarray) -> np.ndarray:
        sub = rows[self.arms]
        sigma = sub.T @ (self.weights[:, None] * sub)
        return 0.5 * (sigma + sigma.T)


# ---------------------------------------------------------------------------
# Vectors and matrices
# ---------------------------------------------------------------------------
def vectorize(arm: Iterable[int], d: int) -> np.ndarray:
    """θ_M: coordinate e is 1 iff e ∈ arm."""
    members = list(arm)
    if not members:
        raise FamilyError("super arms must be non-empty")
    out = np.zeros(d, dtype=float)
    for e in members:
        if not 0 <= int(e) < d:
            raise FamilyError(f"base arm {e} out of range for d={d}")
        out[int(e)] = 1.0
    return out


def theta_matrix(family: "SuperArmFamily") -> ThetaMatrix:
    return ThetaMatrix(rows=family.vectors, m=family.uniform_size)


def covariance(weights: Sequence[float], theta: ThetaMatrix) -> np.ndarray:
    """Σ = Σ_M p(M) θ_M θ_Mᵀ for a distribution p over the rows of ``theta``."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (theta.rows.shape[0],):
        raise DomainError(f"expected {theta.rows.shape[0]} weights, got shape {w.shape}")
    if np.any(w < -DECOMP_TOL) or abs(w.sum() - 1.0) > DECOMP_TOL:
        raise DomainError("weights must be nonnegative and sum to 1")
    rows = theta.rows
    sigma = rows.T @ (w[:, None] * rows)
    return 0.5 * (sigma + sigma.T)


def pseudo_inverse(sigma: np.ndarray) -> np.ndarray:
    """
    Moore–Penrose pseudo-inverse of a symmetric PSD matrix via eigh.
    Eigenvalues below EIG_CUTOFF · λ_max count as zero.
    """
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise DomainError("pseudo_inverse expects a symmetric matrix")
    vals, vecs = np.linalg.eigh(a)
    top = float(vals.max(initial=0.0))
    if top <= 0.0:
        return np.zeros_like(a)
    keep = vals > EIG_CUTOFF * top
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    out = (vecs * inv) @ vecs.T
    return 0.5 * (out + out.T)


def _smallest_nonzero_eigenvalue(sigma: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(sigma)
    top = float(vals.max(initial=0.0))
    nonzero = vals[vals > EIG_CUTOFF * top]
    return float(nonzero.min()) if nonzero.size else 0.0


def spectral_constants(family: "SuperArmFamily") -> SpectralConstants:
    """λ_min, ρ⁰, ρ_min and the uniform-law Σ⁺ of a family."""
    theta = theta_matrix(family)
    k = theta.rows.shape[0]
    sigma = covariance(np.full(k, 1.0 / k), theta)

    m = family.uniform_size or int(theta.sizes.max())
    counts = theta.rows.sum(axis=0)
    rho0 = counts / (m * k)
    if family.uniform_size is None:
        # mixed sizes: renormalise so ρ⁰ stays a distribution
        rho0 = rho0 / rho0.sum()
    rho_min = float(np.min(m * rho0))

    return SpectralConstants(
        lambda_min=_smallest_nonzero_eigenvalue(sigma),
        rho0=rho0,
        rho_min=rho_min,
        sigma_unif_pinv=pseudo_inverse(sigma),
        m=m,
    )


def estimable_base_arms(family: "SuperArmFamily") -> List[int]:
    """Base arms e whose singleton indicator lies in span{θ_M} (rank test)."""
    rows = family.vectors
    base_rank = np.linalg.matrix_rank(rows, tol=RANK_TOL)
    out = []
    for e in range(family.d):
        unit = np.zeros((1, family.d))
        unit[0, e] = 1.0
        if np.linalg.matrix_rank(np.vstack([rows, unit]), tol=RANK_TOL) == base_rank:
            out.append(e)
    return out


# ---------------------------------------------------------------------------
# Decomposition  m·q  ->  distribution over super arms
# ---------------------------------------------------------------------------
def _peel_uniform_matroid(family: "SuperArmFamily", target: np.ndarray) -> SparseArmDistribution:
    """
    Greedy vertex peeling on {0 ≤ x ≤ s, Σx = m s}: take the m largest
    residual coordinates, subtract the largest weight that keeps the residual
    in the scaled polytope. Each step zeroes or tightens a coordinate.
    """
    d, m = family.d, family.uniform_size
    x = target.astype(float).copy()
    s = 1.0
    arms: List[int] = []
    weights: List[float] = []

    for _ in range(2 * d + 2):
        if s <= 1e-15 or x.max(initial=0.0) <= 1e-15:
            break
        order = np.argsort(-x, kind="stable")
        top, rest = order[:m], order[m:]
        lam = min(float(x[top].min()), s - (float(x[rest].max()) if rest.size else 0.0))
        if lam <= 0.0:
            break
        x[top] -= lam
        np.clip(x, 0.0, None, out=x)
        s -= lam
        idx = family.arm_index[tuple(sorted(int(e) for e in top))]
        if arms and arms[-1] == idx:
            weights[-1] += lam
        else:
            arms.append(idx)
            weights.append(lam)

    return SparseArmDistribution(np.asarray(arms, dtype=int), np.asarray(weights, dtype=float))


def _caratheodory_reduce(a: np.ndarray, w: np.ndarray, max_support: int) -> np.ndarray:
    """Shrink the support of a nonnegative solution of a·w = b to at most max_support."""
    w = w.copy()
    support = np.flatnonzero(w > 0)
    while support.size > max_support:
        z = null_space(a[:, support])
        if z.shape[1] == 0:
            break
        z = z[:, 0]
        if not np.any(z > 1e-14):
            z = -z
        pos = z > 1e-14
        ratios = w[support][pos] / z[pos]
        step = float(ratios.min())
        w[support] -= step * z
        w[support[pos][int(np.argmin(ratios))]] = 0.0
        w[w < 1e-15] = 0.0
        support = np.flatnonzero(w > 0)
    return w


def _decompose_generic(family: "SuperArmFamily", target: np.ndarray) -> SparseArmDistribution:
    rows = family.vectors
    k, d = rows.shape
    a = np.vstack([rows.T, np.ones((1, k))])
    b = np.concatenate([target, [1.0]])
    w, rnorm = nnls(a, b, maxiter=50 * k)
    if rnorm > 1e-7:
        raise DecompositionError("target is not in the convex hull of the family", rnorm)
    w[w < 1e-15] = 0.0
    w = _caratheodory_reduce(a, w, d + 1)
    support = np.flatnonzero(w > 0)
    # re-solve nnls on the reduced support
    w_s, _ = nnls(a[:, support], b)
    keep = w_s > 0
    return SparseArmDistribution(support[keep].astype(int), w_s[keep])


def decompose(family: "SuperArmFamily", target: Sequence[float]) -> SparseArmDistribution:
    """
    Write ``target`` ∈ Co(θ) as Σ p(M) θ_M with at most d+1 arms.

    Complete uniform matroids use greedy peeling; other families use NNLS
    followed by a Carathéodory support reduction.
    """
    x = np.asarray(target, dtype=float)
    if x.shape != (family.d,):
        raise DomainError(f"target must have length {family.d}")
    if np.any(x < -DECOMP_TOL) or np.any(x > 1.0 + DECOMP_TOL):
        raise DecompositionError("target coordinates must lie in [0, 1]", float(np.abs(x).max()))
    x = np.clip(x, 0.0, 1.0)

    if family.is_complete_uniform:
        m = family.uniform_size
        if abs(x.sum() - m) > 1e-7:
            raise DecompositionError(f"target must sum to m={m}", abs(x.sum() - m))
        dist = _peel_uniform_matroid(family, x)
    else:
        dist = _decompose_generic(family, x)

    if len(dist) == 0:
        raise DecompositionError("empty decomposition", float(np.abs(x).max()))
    weights = dist.weights / dist.weights.sum()
    dist = SparseArmDistribution(dist.arms, weights)
    residual = float(np.abs(dist.mean_vector(family.vectors) - x).max())
    if residual > DECOMP_TOL:
        raise DecompositionError("decomposition did not reproduce the target", residual)
    if len(dist) > family.d + 1:
        raise DecompositionError(f"support {len(dist)} exceeds d+1", residual)
    return dist


# ---------------------------------------------------------------------------
# KL projection onto 𝒬
# ---------------------------------------------------------------------------
def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p, q) = Σ p log(p/q) with 0·log 0 = 0."""
    return float(np.sum(rel_entr(np.asarray(p, dtype=float), np.asarray(q, dtype=float))))


def projection_accuracy(t: int) -> float:
    """ε_t = 1 / (t² · max(1, ln t)³)."""
    t = max(int(t), 1)
    return 1.0 / (t * t * max(1.0, math.log(t)) ** 3)


def water_fill(q_tilde: np.ndarray, cap: float) -> np.ndarray:
    """KL projection onto {p ≥ 0, Σp = 1, p ≤ cap}: p = min(c·q̃, cap)."""
    q = np.asarray(q_tilde, dtype=float)
    d = q.size
    order = np.argsort(-q, kind="stable")
    qs = q[order]
    tail = np.cumsum(qs[::-1])[::-1]
    for k in range(d):
        c = (1.0 - k * cap) / tail[k]
        if c * qs[k] <= cap * (1.0 + 1e-12):
            p = np.minimum(c * q, cap)
            return p / p.sum()
    return np.full(d, 1.0 / d)


def _pairwise_frank_wolfe(
    family: "SuperArmFamily",
    q_tilde: np.ndarray,
    eps: float,
    max_iter: int,
    warm_start: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Pairwise Frank–Wolfe over the vertices θ_M/m. Stops once the Frank–Wolfe
    gap ⟨∇KL(p), p − s⟩, an upper bound on the suboptimality, is ≤ eps.
    Returns the projection, its vertex weights and the iteration count.
    """
    m = family.uniform_size
    verts_full = family.vectors / m
    covered = verts_full.sum(axis=0) > 0
    verts = verts_full[:, covered]
    log_q = np.log(q_tilde[covered])

    k = verts.shape[0]
    if warm_start is None:
        lam = np.full(k, 1.0 / k)
    else:
        lam = np.asarray(warm_start, dtype=float)
        if lam.shape != (k,) or np.any(lam < 0.0) or lam.sum() <= 0.0:
            raise DomainError(f"warm start must be {k} non-negative vertex weights")
        lam = (1.0 - WARM_START_MIX) * lam / lam.sum() + WARM_START_MIX / k
    p = lam @ verts
    gap = float("inf")

    def result(it: int) -> Tuple[np.ndarray, np.ndarray, int]:
        out = np.zeros(family.d)
        out[covered] = p
        return out, lam, it

    for it in range(max_iter):
        grad = np.log(p) - log_q
        scores = verts @ grad
        s_idx = int(np.argmin(scores))
        gap = float(grad @ p - scores[s_idx])
        if gap <= eps:
            return result(it)

        active = np.flatnonzero(lam > 0)
        a_idx = int(active[np.argmax(scores[active])])
        if a_idx == s_idx:
            # every active vertex already scores the minimum
            return result(it)
        direction = verts[s_idx] - verts[a_idx]
        gmax = float(lam[a_idx])

        def slope(g: float) -> float:
            with np.errstate(divide="ignore", invalid="ignore"):
                val = float(direction @ (np.log(p + g * direction) - log_q))
            return val if np.isfinite(val) else float("inf")

        hi = gmax
        slope_hi = slope(hi)
        if slope_hi <= 0.0:
            step = gmax
        else:
            if slope_hi == float("inf"):
                # a coordinate hits zero exactly at gmax
                hi = gmax * (1.0 - 1e-9)
                slope_hi = slope(hi)
            step = brentq(slope, 0.0, hi, xtol=1e-15) if slope_hi > 0.0 else hi

        lam[s_idx] += step
        lam[a_idx] -= step
        if lam[a_idx] <= 1e-16:
            lam[a_idx] = 0.0
        p = np.maximum(lam @ verts, 1e-300)

    raise ProjectionError("KL projection did not converge", gap, max_iter)


def kl_project(
    family: "SuperArmFamily",
    q_tilde: Sequence[float],
    eps: float,
    max_iter: int = PROJECTION_MAX_ITER,
) -> np.ndarray:
    """
    argmin_{p ∈ 𝒬} KL(p, q̃) up to additive accuracy max(eps, MIN_PROJECTION_EPS).

    Complete uniform matroids (𝒬 = capped simplex) are solved exactly by
    water-filling; other uniform-size families by pairwise Frank–Wolfe.
    """
    return kl_project_weighted(family, q_tilde, eps, max_iter=max_iter)[0]


def kl_project_weighted(
    family: "SuperArmFamily",
    q_tilde: Sequence[float],
    eps: float,
    warm_start: Optional[np.ndarray] = None,
    max_iter: int = PROJECTION_MAX_ITER,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    kl_project that also returns the Frank–Wolfe vertex weights (None for
    water-filling). Passing the previous weights as ``warm_start`` lets
    consecutive mirror steps reuse the last solution.
    """
    q = np.asarray(q_tilde, dtype=float)
    if q.shape != (family.d,):
        raise DomainError(f"q_tilde must have length {family.d}")
    if np.any(q <= 0.0) or abs(q.sum() - 1.0) > 1e-9:
        raise DomainError("q_tilde must be strictly positive and sum to 1")
    if not eps > 0.0:
        raise DomainError("eps must be positive")
    if family.uniform_size is None:
        raise FamilyError("KL projection needs a family with a common arm size m")

    if family.is_complete_uniform:
        return water_fill(q, 1.0 / family.uniform_size), None

    p, weights, iterations = _pairwise_frank_wolfe(
        family, q, max(eps, MIN_PROJECTION_EPS), max_iter, warm_start=warm_start
    )
    log.debug("KL projection converged after %d iterations", iterations)
    return p, weights


def in_polytope(family: "SuperArmFamily", q: Sequence[float], tol: float = 1e-6) -> bool:
    """Is q ∈ 𝒬 (within tol)?"""
    x = np.asarray(q, dtype=float)
    if family.uniform_size is None or x.shape != (family.d,):
        return False
    if abs(x.sum() - 1.0) > tol or np.any(x < -tol):
        return False
    m = family.uniform_size
    if family.is_complete_uniform:
        return bool(np.all(x <= 1.0 / m + tol))
    rows = family.vectors
    k = rows.shape[0]
    a = np.vstack([rows.T / m, np.ones((1, k))])
    _, rnorm = nnls(a, np.concatenate([x, [1.0]]), maxiter=50 * k)
    return bool(rnorm <= tol)
