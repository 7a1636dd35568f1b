# tests/test_mixcombucb.py
"""
Tests for the semi-bandit algorithm: covering initialization, confidence
radii, the forced-sampling mixture, inverse-propensity updates and runs.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from services.instance import (
    make_family_from_arms,
    make_instance,
    make_restricted_family,
    make_uniform_matroid,
    sample_reward,
    true_gaps,
)
from services.mixcombucb import (
    MixtureRecord,
    UCBTrace,
    alpha_warnings,
    confidence_radius,
    inclusion_prob,
    init_ucb,
    mixture_distribution,
    run_mixcombucb,
    ucb_estimates,
    ucb_select,
    ucb_update,
)
from utils.errors import DomainError
from utils.metrics import max_pairwise_error

MU = (0.9, 0.8, 0.2, 0.1)


def _restricted_env():
    fam = make_restricted_family(2)
    return fam, make_instance(fam, [0.6, 0.5, 0.4, 0.3])


def _record(ucb_arm, selected):
    """Restricted d0=2 family, m0=4, α=1, t=10 -> α_t = 0.025."""
    fam, _ = _restricted_env()
    return MixtureRecord(
        t=10,
        ucb_arm=ucb_arm,
        alpha_t=0.025,
        m0=4,
        ucb_members=fam.vectors[ucb_arm] > 0,
        forced_count=np.array([1, 1, 2, 2]),
        forced_arms=(2, 2, 0, 1),
        selected=selected,
    )


class TestInit:
    """InitUCB covering traces."""

    def test_uniform_matroid_d9_m4(self):
        """Three oracle calls cover 4+4+1 arms; m0 = 9."""
        fam = make_uniform_matroid(9, 4)
        inst = make_instance(fam, np.full(9, 0.5))
        state = init_ucb(fam, inst, np.random.default_rng(0))
        assert len(state.init_arms) == 3
        assert state.m0 == 9
        np.testing.assert_array_equal(state.covered, np.arange(9))
        assert np.all(state.T == 1), "Every covered arm is observed once"
        assert state.t == 8, "Main loop starts at t = m0"

    def test_restricted_trace(self):
        """{3,4} first, then {1}, then {2}."""
        fam, inst = _restricted_env()
        state = init_ucb(fam, inst, np.random.default_rng(0))
        assert state.init_arms == [2, 0, 1]
        assert state.forced == [(2, 2), (3, 2), (0, 0), (1, 1)]
        np.testing.assert_array_equal(state.forced_count, [1, 1, 2, 2])
        assert state.m0 == 4

    def test_single_arm(self):
        """{{1,2}}: one call, m0 = 2."""
        fam = make_family_from_arms(2, [[0, 1]])
        state = init_ucb(fam, make_instance(fam, [0.5, 0.5]), np.random.default_rng(0))
        assert len(state.init_arms) == 1
        assert state.m0 == 2

    def test_uncovered_arms_dropped(self):
        """Base arms in no super arm leave E with a warning."""
        fam = make_family_from_arms(3, [[0], [1]])
        state = init_ucb(fam, make_instance(fam, [0.5, 0.5, 0.5]), np.random.default_rng(0))
        np.testing.assert_array_equal(state.covered, [0, 1])
        assert state.warnings and "{3}" in state.warnings[0]

    def test_alpha_set_at_init(self):
        """The state leaves InitUCB with its α; the first round uses α_t = 1/(m0·t^α)."""
        fam, inst = _restricted_env()
        assert init_ucb(fam, inst, np.random.default_rng(0)).alpha == 0.0
        state = init_ucb(fam, inst, np.random.default_rng(0), alpha=0.5)
        assert state.alpha == 0.5
        _, record = ucb_select(state, np.random.default_rng(1))
        assert record.t == 4
        assert record.alpha_t == pytest.approx(1.0 / (4 * math.sqrt(4)))

    def test_negative_alpha_rejected(self):
        """α < 0 is refused before any oracle call."""
        fam, inst = _restricted_env()
        with pytest.raises(ValueError):
            init_ucb(fam, inst, np.random.default_rng(0), alpha=-0.1)


class TestMixture:
    """Confidence radii, π_t and inclusion probabilities."""

    def test_confidence_radius(self):
        """c_{1,s} = 0, c_{e²,2} = √2, c_{100,10} = √(2 ln 100 / 10)."""
        assert confidence_radius(1, 5) == 0.0
        assert confidence_radius(math.exp(2), 2) == pytest.approx(math.sqrt(2))
        assert confidence_radius(100, 10) == pytest.approx(math.sqrt(2 * math.log(100) / 10))
        assert confidence_radius(100, 10) == pytest.approx(0.9597, abs=1e-3)

    def test_confidence_radius_needs_observation(self):
        """s = 0 is a domain error."""
        with pytest.raises(DomainError):
            confidence_radius(10, 0)

    def test_mixture_masses(self):
        """π(M̃) = 0.9; forced arms get α_t per pair; total mass 1."""
        pi = mixture_distribution(_record(ucb_arm=0, selected=0))
        assert pi[0] == pytest.approx(0.9 + 0.025)
        assert pi[2] == pytest.approx(0.05)
        assert pi[1] == pytest.approx(0.025)
        assert sum(pi.values()) == pytest.approx(1.0)

    def test_inclusion_prob_forced_only(self):
        """e=4 outside M̃ but in two forced pairs -> 2·α_t = 0.05."""
        assert inclusion_prob(_record(ucb_arm=0, selected=0), 3) == pytest.approx(0.05)

    def test_inclusion_prob_with_ucb_arm(self):
        """e=4 in M̃ and in two forced pairs -> 0.9 + 0.05."""
        assert inclusion_prob(_record(ucb_arm=2, selected=2), 3) == pytest.approx(0.95)

    def test_inclusion_prob_uncovered(self):
        """Uncovered base arms have no inclusion probability."""
        record = _record(ucb_arm=0, selected=0)
        record = MixtureRecord(**{**record.__dict__, "forced_count": np.array([1, 1, 2, 0])})
        with pytest.raises(DomainError):
            inclusion_prob(record, 3)

    def test_inclusion_probabilities_match_mixture(self):
        """ℙ(e ∈ M(t)) equals the π_t mass of arms containing e."""
        fam, inst = _restricted_env()
        state = init_ucb(fam, inst, np.random.default_rng(1), alpha=0.5)
        _, record = ucb_select(state, np.random.default_rng(2))
        pi = mixture_distribution(record)
        for e in range(fam.d):
            mass = sum(p for arm, p in pi.items() if e in fam.arms[arm])
            assert inclusion_prob(record, e) == pytest.approx(mass)
            assert 0.0 < inclusion_prob(record, e) <= 1.0 + 1e-12

    def test_select_frequencies(self):
        """Selections follow π_t."""
        fam, inst = _restricted_env()
        state = init_ucb(fam, inst, np.random.default_rng(1), alpha=1.0)
        rng = np.random.default_rng(3)
        _, record = ucb_select(state, rng)
        pi = mixture_distribution(record)
        draws = [ucb_select(state, rng)[0] for _ in range(4000)]
        for arm, p in pi.items():
            assert abs(np.mean(np.array(draws) == arm) - p) < 0.03

    def test_alpha_zero_never_exploits(self):
        """α = 0 puts all mass on the forced arms."""
        fam, inst = _restricted_env()
        state = init_ucb(fam, inst, np.random.default_rng(1), alpha=0.0)
        _, record = ucb_select(state, np.random.default_rng(0))
        assert record.alpha_t * record.m0 == pytest.approx(1.0)
        assert alpha_warnings(inst, 0.0), "α = 0 should be flagged"


class TestUpdate:
    """IPW accumulators and running means."""

    def setup_method(self):
        self.family, self.inst = _restricted_env()
        self.state = init_ucb(self.family, self.inst, np.random.default_rng(0), alpha=1.0)

    def test_ipw_increment(self):
        """w=1 at P=0.05 adds 20; running mean (0.5·1 + 1)/2."""
        self.state.w_hat[2] = 0.5
        record = _record(ucb_arm=0, selected=2)
        ucb_update(self.state, {2: 1.0, 3: 0.0}, record)
        assert self.state.acc[2] == pytest.approx(20.0)
        assert self.state.acc[3] == 0.0
        assert self.state.T[2] == 2
        assert self.state.w_hat[2] == pytest.approx(0.75)
        assert self.state.t == 10

    def test_unobserved_arms_untouched(self):
        """Arms outside M(t) keep T, ŵ and the accumulator."""
        before = (self.state.T.copy(), self.state.w_hat.copy())
        ucb_update(self.state, {0: 1.0}, _record(ucb_arm=0, selected=0))
        np.testing.assert_array_equal(self.state.T[1:], before[0][1:])
        np.testing.assert_array_equal(self.state.w_hat[1:], before[1][1:])
        assert not self.state.acc[1:].any()

    def test_observation_mismatch(self):
        """Observed coordinates must match the played arm."""
        with pytest.raises(DomainError):
            ucb_update(self.state, {2: 1.0}, _record(ucb_arm=0, selected=2))

    def test_estimates_arithmetic(self):
        """acc=(50,30,10,10), n=100: Δ̂({1,2},{3,4}) = 0.6."""
        fam = make_uniform_matroid(4, 2)
        state = init_ucb(fam, make_instance(fam, MU), np.random.default_rng(0))
        state.acc[:] = [50.0, 30.0, 10.0, 10.0]
        super_gap, base_gap = ucb_estimates(state, 100)
        assert super_gap[0, 5] == pytest.approx(0.6)
        np.testing.assert_allclose(super_gap, -super_gap.T)
        np.testing.assert_allclose(np.diag(super_gap), 0.0)
        assert base_gap[0, 1] == pytest.approx(0.2)


class TestRuns:
    """Complete runs through run_mixcombucb."""

    @classmethod
    def setup_class(cls):
        cls.inst = make_instance(make_uniform_matroid(4, 2), MU)

    def test_run_accounting(self):
        """Init calls are charged as extra rounds before t = m0 … n."""
        run = run_mixcombucb(self.inst, 50, 0.5, np.random.default_rng(1), checkpoints=[2, 50])
        assert run.init_calls == 2
        assert run.chosen.shape == (run.init_calls + 50 - 4 + 1,)
        assert [s[0] for s in run.snapshots] == [2, 50]
        assert run.snapshots[0][1] == run.init_calls, "Early checkpoints see post-init state"
        assert run.snapshots[-1][1] == run.chosen.size

    def test_trace_hook(self):
        """One trace record per main-loop round."""
        records = []
        run_mixcombucb(self.inst, 20, 0.5, np.random.default_rng(2), trace=records.append)
        assert [r.t for r in records] == list(range(4, 21))
        assert all(isinstance(r, UCBTrace) for r in records)

    def test_run_deterministic(self):
        """Same seed, same run."""
        a = run_mixcombucb(self.inst, 40, 0.25, np.random.default_rng(5), checkpoints=[40])
        b = run_mixcombucb(self.inst, 40, 0.25, np.random.default_rng(5), checkpoints=[40])
        np.testing.assert_array_equal(a.chosen, b.chosen)
        np.testing.assert_array_equal(a.snapshots[0][3], b.snapshots[0][3])

    def test_mixed_size_family(self):
        """Semi-bandit runs accept families with mixed arm sizes."""
        fam, inst = _restricted_env()
        run = run_mixcombucb(inst, 30, 0.5, np.random.default_rng(3), checkpoints=[30])
        np.testing.assert_array_equal(run.estimable, [0, 1, 2, 3])
        assert run.snapshots[0][2].shape == (3, 3)

    def test_alpha_range_warnings(self):
        """α > 1/2 is fine with a large gap, α > 1 never is."""
        assert not alpha_warnings(self.inst, 0.75), "Reference instance has Δ_min = 0.6"
        assert alpha_warnings(self.inst, 1.5)
        close = make_instance(make_uniform_matroid(4, 2), [0.5, 0.5, 0.49, 0.1])
        assert alpha_warnings(close, 0.75)


def _ipw_rounds(inst, n, alpha, rng):
    """
    Play InitUCB plus rounds m0 … n by hand. Returns the final state and the
    number of (e, t) pairs where μ(e) fell outside ŵ ± c before the update.
    """
    state = init_ucb(inst.family, inst, rng, alpha=alpha)
    misses = pairs = 0
    for _ in range(state.m0, n + 1):
        arm, record = ucb_select(state, rng)
        for e in state.covered:
            radius = confidence_radius(max(record.t - 1, 1), int(state.T[e]))
            misses += abs(state.w_hat[e] - inst.mu[e]) > radius
            pairs += 1
        w = sample_reward(rng, inst)
        ucb_update(state, {e: float(w[e]) for e in inst.family.arms[arm]}, record)
    return state, misses, pairs


@pytest.mark.slow
class TestStatistics:
    """Unbiasedness, consistency, coverage and regret ordering over many seeds."""

    def test_unbiased_gaps(self):
        """Sample means of Δ̂_M and Δ̂_μ are within 3 SE of the truth (d=4, m=2, n=2000)."""
        inst = make_instance(make_uniform_matroid(4, 2), MU)
        gaps = true_gaps(inst)
        n, seeds = 2000, 200
        runs = [
            run_mixcombucb(inst, n, 0.25, np.random.default_rng(2000 + s), checkpoints=[n])
            for s in range(seeds)
        ]
        for k, truth in ((2, gaps.super_gap), (3, gaps.base_gap)):
            est = np.array([r.snapshots[-1][k] for r in runs])
            mean = est.mean(axis=0)
            se = est.std(axis=0, ddof=1) / math.sqrt(seeds)
            iu = np.triu_indices(truth.shape[0], 1)
            assert np.all(np.abs(mean - truth)[iu] <= 3 * se[iu] + 1e-12)

    def test_ipw_consistency(self):
        """acc(e) per accumulating round is within 3 SE of μ(e) at t = 2000, 200 seeds."""
        inst = make_instance(make_uniform_matroid(4, 2), MU)
        n, seeds = 2000, 200
        rates = []
        for s in range(seeds):
            state, _, _ = _ipw_rounds(inst, n, 0.25, np.random.default_rng(5000 + s))
            rates.append(state.acc[state.covered] / (n - state.m0 + 1))
        rates = np.array(rates)
        mean = rates.mean(axis=0)
        se = rates.std(axis=0, ddof=1) / math.sqrt(seeds)
        truth = np.asarray(inst.mu)[state.covered]
        assert np.all(np.abs(mean - truth) <= 3 * se + 1e-12), f"{mean} vs {truth}"

    def test_confidence_coverage(self):
        """μ(e) lies outside ŵ ± c for fewer than 1% of (e, t) pairs."""
        fam = make_uniform_matroid(9, 4)
        misses = pairs = 0
        for s in range(5):
            rng = np.random.default_rng(6000 + s)
            inst = make_instance(fam, rng.uniform(0.1, 0.9, size=9))
            _, m, p = _ipw_rounds(inst, 2000, 0.5, rng)
            misses += m
            pairs += p
        assert misses / pairs < 0.01, f"coverage failures {misses}/{pairs}"

    def test_alpha_frontier(self):
        """On d=9, m=4, n=2000, 20 seeds: regret falls and max error rises strictly in α."""
        fam = make_uniform_matroid(9, 4)
        regrets, errors = [], []
        for alpha in (0.0, 0.25, 0.5, 1.0):
            reg = err = 0.0
            for s in range(20):
                rng = np.random.default_rng(3000 + s)
                inst = make_instance(fam, rng.uniform(0.1, 0.9, size=9))
                gaps = true_gaps(inst)
                run = run_mixcombucb(inst, 2000, alpha, rng, checkpoints=[2000])
                reg += float(gaps.opt_gap[run.chosen].sum())
                err += max_pairwise_error(run.snapshots[-1][2], gaps.super_gap)
            regrets.append(reg / 20)
            errors.append(err / 20)
        assert np.all(np.diff(regrets) < 0), f"regret not decreasing: {regrets}"
        assert np.all(np.diff(errors) > 0), f"max error not increasing: {errors}"
