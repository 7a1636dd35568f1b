# tests/test_instance.py
"""
Unit tests for families, instances, the oracle and ground-truth gaps.

Reference instance: all 2-subsets of d=4 with μ = (0.9, 0.8, 0.2, 0.1).
Arms in lexicographic order: {1,2} {1,3} {1,4} {2,3} {2,4} {3,4}.
"""

import itertools
import sys
from pathlib import Path

# Add parent directory to path so we can import services
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from services.instance import (
    BanditInstance,
    f_value,
    has_large_gap,
    large_gap_report,
    make_family_from_arms,
    make_hard_pair,
    make_instance,
    make_perfect_matchings,
    make_restricted_family,
    make_uniform_matroid,
    min_gap,
    sample_means,
    sample_reward,
    solve_oracle,
    true_gaps,
)
from utils.errors import DomainError, FamilyError, SizingError

MU = (0.9, 0.8, 0.2, 0.1)


class TestFamilies:
    """Family constructors and their invariants."""

    def test_uniform_matroid_counts(self):
        """C(8,3)=56 and C(9,4)=126 arms, all of size m."""
        assert len(make_uniform_matroid(8, 3)) == 56, "d=8, m=3 should give 56 arms"
        fam = make_uniform_matroid(9, 4)
        assert len(fam) == 126, "d=9, m=4 should give 126 arms"
        assert fam.uniform_size == 4
        assert all(len(arm) == 4 for arm in fam.arms)

    def test_uniform_matroid_single_arm(self):
        """d=m gives the single full subset."""
        fam = make_uniform_matroid(2, 2)
        assert fam.arms == ((0, 1),), "Only {1,2} is feasible"
        assert fam.is_complete_uniform

    def test_uniform_matroid_lexicographic(self):
        """Arms come out in lexicographic order."""
        fam = make_uniform_matroid(4, 2)
        assert fam.arms == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

    def test_m_larger_than_d_rejected(self):
        """m > d is a sizing error."""
        with pytest.raises(SizingError):
            make_uniform_matroid(3, 4)

    def test_restricted_family(self):
        """d0=3 gives {1},{2},{3,4},{5,6} over d=6."""
        fam = make_restricted_family(3)
        assert fam.d == 6
        assert fam.arms == ((0,), (1,), (2, 3), (4, 5))
        assert fam.uniform_size is None, "Mixed sizes leave uniform_size unset"

    def test_restricted_family_small(self):
        """d0=1 has no pairs, d0=2 has three arms."""
        assert make_restricted_family(1).arms == ((0,), (1,))
        fam = make_restricted_family(2)
        assert len(fam) == 3 and fam.d == 4

    def test_perfect_matchings(self):
        """K_{3,3} has 3! = 6 perfect matchings over 9 edges."""
        fam = make_perfect_matchings(3)
        assert fam.d == 9 and len(fam) == 6
        assert fam.uniform_size == 3
        # every edge lies in exactly (m-1)! = 2 matchings
        np.testing.assert_array_equal(fam.vectors.sum(axis=0), np.full(9, 2.0))
        assert not fam.is_complete_uniform

    def test_family_from_arms_infers_size(self):
        """uniform_size is set only when all arms agree."""
        assert make_family_from_arms(3, [[1, 0], [2, 1]]).uniform_size == 2
        assert make_family_from_arms(3, [[0], [1, 2]]).uniform_size is None

    def test_invalid_families(self):
        """Duplicates, empty arms and out-of-range elements are rejected."""
        with pytest.raises(FamilyError):
            make_family_from_arms(3, [[0, 1], [1, 0]])
        with pytest.raises(FamilyError):
            make_family_from_arms(3, [[0], []])
        with pytest.raises(FamilyError):
            make_family_from_arms(3, [[0, 3]])
        with pytest.raises(FamilyError):
            make_family_from_arms(3, [])


class TestInstances:
    """Instance construction and sampling."""

    def test_hard_pair(self):
        """(ζ=0.1, g=0.05) -> μ₁=(0.4, 0.5), μ₂=(0.4, 0.6)."""
        first, second = make_hard_pair(0.1, 0.05)
        np.testing.assert_allclose(first.mu, [0.4, 0.5])
        np.testing.assert_allclose(second.mu, [0.4, 0.6])

    def test_hard_pair_edges(self):
        """Zero perturbation gives identical instances; g=1/8 gives 0.75."""
        first, second = make_hard_pair(0.0, 0.0)
        np.testing.assert_allclose(first.mu, second.mu)
        _, second = make_hard_pair(0.2, 0.125)
        assert second.mu[1] == pytest.approx(0.75)

    def test_hard_pair_range(self):
        """g beyond 1/8 or ζ outside [0, 1) is rejected."""
        with pytest.raises(DomainError):
            make_hard_pair(0.1, 0.2)
        with pytest.raises(DomainError):
            make_hard_pair(1.0, 0.0)

    def test_means_validated(self):
        """Means outside [0, 1] or of the wrong length are rejected."""
        fam = make_uniform_matroid(4, 2)
        with pytest.raises(DomainError):
            make_instance(fam, [0.5, 0.5, 0.5, 1.5])
        with pytest.raises(FamilyError):
            make_instance(fam, [0.5, 0.5])
        with pytest.raises(FamilyError):
            make_instance(fam, MU, noise="gaussian")

    def test_sample_means_deterministic(self):
        """Same seed, same vector; draws stay inside [lo, hi]."""
        a = sample_means(np.random.default_rng(7), 8, 0.1, 0.9)
        b = sample_means(np.random.default_rng(7), 8, 0.1, 0.9)
        np.testing.assert_array_equal(a, b)
        assert np.all((a >= 0.1) & (a <= 0.9))

    def test_sample_means_empty_interval(self):
        """lo = hi is an invalid range."""
        with pytest.raises(DomainError):
            sample_means(np.random.default_rng(0), 3, 0.5, 0.5)

    def test_degenerate_bernoulli(self):
        """μ=1 always pays 1, μ=0 always pays 0."""
        inst = make_instance(make_uniform_matroid(2, 1), [1.0, 0.0])
        rng = np.random.default_rng(3)
        for _ in range(50):
            w = sample_reward(rng, inst)
            assert w[0] == 1.0 and w[1] == 0.0

    def test_bernoulli_mean(self):
        """10⁵ draws of B(0.3) average to 0.3 within 3 standard errors."""
        inst = make_instance(make_uniform_matroid(1, 1), [0.3])
        rng = np.random.default_rng(11)
        draws = np.array([sample_reward(rng, inst)[0] for _ in range(100_000)])
        se = np.sqrt(0.21 / 100_000)
        assert abs(draws.mean() - 0.3) < 3 * se

    def test_uniform_law_support_and_mean(self):
        """The interval law stays in [0, 1] and keeps the mean, also near the border."""
        inst = make_instance(make_uniform_matroid(3, 1), [0.05, 0.5, 0.97], noise="uniform")
        rng = np.random.default_rng(5)
        draws = np.vstack([sample_reward(rng, inst) for _ in range(20_000)])
        assert draws.min() >= 0.0 and draws.max() <= 1.0
        np.testing.assert_allclose(draws.mean(axis=0), inst.mu, atol=3e-3)


class TestOracleAndGaps:
    """Oracle, gap tables and minimum gaps on the reference instance."""

    @classmethod
    def setup_class(cls):
        cls.family = make_uniform_matroid(4, 2)
        cls.inst = make_instance(cls.family, MU)
        cls.gaps = true_gaps(cls.inst)

    def test_oracle_best_arm(self):
        """The oracle returns {1,2} with value 1.7."""
        idx, value = solve_oracle(self.family, MU)
        assert self.family.arms[idx] == (0, 1)
        assert value == pytest.approx(1.7)

    def test_oracle_tie_break(self):
        """Equal weights select the lowest index."""
        idx, _ = solve_oracle(self.family, [0.5, 0.5, 0.5, 0.5])
        assert idx == 0, "Ties should go to the lexicographically first arm"

    def test_oracle_rejects_nan(self):
        """Non-finite weights are a domain error."""
        with pytest.raises(DomainError):
            solve_oracle(self.family, [np.nan, 0.0, 0.0, 0.0])

    def test_f_value(self):
        """f(M, μ) for every arm."""
        np.testing.assert_allclose(f_value(self.family, MU), [1.7, 1.1, 1.0, 1.0, 0.9, 0.3])

    def test_gap_tables(self):
        """Δ_M({3,4}) = 1.4, Δ_μ(1,2) = 0.1, opt gap zero at M*."""
        assert self.gaps.best_index == 0
        assert self.gaps.opt_gap[5] == pytest.approx(1.4)
        assert self.gaps.opt_gap[0] == 0.0
        assert self.gaps.base_gap[0, 1] == pytest.approx(0.1)
        assert np.all(self.gaps.opt_gap >= 0.0)

    def test_gap_tables_antisymmetric(self):
        """super_gap and base_gap are antisymmetric with zero diagonal."""
        for table in (self.gaps.super_gap, self.gaps.base_gap):
            np.testing.assert_allclose(table, -table.T)
            np.testing.assert_allclose(np.diag(table), 0.0)

    def test_oracle_matches_enumeration(self):
        """On 100 random weight vectors the oracle agrees with brute force."""
        rng = np.random.default_rng(21)
        matroid = make_uniform_matroid(6, 3)
        matchings = make_perfect_matchings(3)
        for _ in range(100):
            w = rng.normal(size=6)
            best = max(itertools.combinations(range(6), 3), key=lambda s: w[list(s)].sum())
            idx, value = solve_oracle(matroid, w)
            assert matroid.arms[idx] == best
            assert value == pytest.approx(w[list(best)].sum())

            w9 = rng.normal(size=9)
            perms = itertools.permutations(range(3))
            totals = [sum(w9[3 * i + p[i]] for i in range(3)) for p in perms]
            _, value = solve_oracle(matchings, w9)
            assert value == pytest.approx(max(totals))

    def test_random_gap_tables(self):
        """Over 100 random instances gaps are antisymmetric and Δ_M ≥ 0."""
        rng = np.random.default_rng(22)
        for _ in range(100):
            d = int(rng.integers(2, 8))
            fam = make_uniform_matroid(d, int(rng.integers(1, d + 1)))
            gaps = true_gaps(make_instance(fam, sample_means(rng, d, 0.0, 1.0)))
            for table in (gaps.super_gap, gaps.base_gap):
                np.testing.assert_allclose(table, -table.T)
            assert np.all(gaps.opt_gap >= 0.0)
            assert gaps.opt_gap[gaps.best_index] == 0.0

    def test_min_gap(self):
        """Δ_{4,min} = 0.7 and Δ_{3,min} = 0.6."""
        assert min_gap(self.inst, 3) == pytest.approx(0.7)
        assert min_gap(self.inst, 2) == pytest.approx(0.6)

    def test_min_gap_domain(self):
        """Base arms of M* have no minimum gap."""
        with pytest.raises(DomainError):
            min_gap(self.inst, 0)

    def test_min_gap_uncovered(self):
        """A base arm outside every suboptimal arm is a domain error."""
        fam = make_family_from_arms(3, [[0], [1]])
        inst = make_instance(fam, [0.9, 0.1, 0.5])
        with pytest.raises(DomainError):
            min_gap(inst, 2)

    def test_large_gap_report(self):
        """The report is the smallest eligible minimum gap."""
        assert large_gap_report(self.inst) == pytest.approx(0.6)
        assert has_large_gap(self.inst, 0.05)
        assert not has_large_gap(self.inst, 0.65)

    def test_instance_is_frozen(self):
        """Instances are immutable."""
        assert isinstance(self.inst, BanditInstance)
        with pytest.raises(Exception):
            self.inst.noise = "uniform"
