"""Allocation/selection policies: hand-checked values, invariances, MC oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranksel.beliefs import GaussianBelief, GroundTruth
from ranksel.policies import (
    BeliefVector,
    aoap_allocate,
    aoap_multistep,
    aoap_values,
    distance_feature,
    distance_squared,
    ea_allocate,
    eoc_value,
    features,
    induced_correlation,
    kg_allocate,
    kg_factors,
    ocba_most_starving_allocate,
    ocba_ratios,
    optimal_ratios,
    ratio_residuals,
    select_max_posterior_mean,
    select_optimal_eoc,
    select_optimal_pcs,
    shrunk_variance,
    two_factor_allocate,
    two_factor_value,
)
from ranksel.vfa import VfaWeights


def belief_vector(means, post_vars, sampling_vars=None, counts=None):
    k = len(means)
    sampling_vars = [1.0] * k if sampling_vars is None else sampling_vars
    counts = [0] * k if counts is None else counts
    return BeliefVector(
        tuple(
            GaussianBelief(
                post_mean=float(m),
                post_var=float(v),
                count=int(c),
                sampling_var=float(s),
                sum_obs=float(m) * int(c),
            )
            for m, v, s, c in zip(means, post_vars, sampling_vars, counts)
        )
    )


def random_belief_vector(rng, k=None):
    k = k or int(rng.integers(2, 6))
    return belief_vector(
        means=rng.normal(size=k),
        post_vars=rng.uniform(0.05, 3.0, size=k),
        sampling_vars=rng.uniform(0.2, 4.0, size=k),
        counts=rng.integers(1, 30, size=k),
    )


class TestSelectionRules:
    def test_max_mean_basic(self):
        assert select_max_posterior_mean(belief_vector([1.0, 0.0, -1.0], [1, 1, 1])) == 0

    def test_max_mean_tie_lowest_index(self):
        assert select_max_posterior_mean(belief_vector([0.5, 0.5, 0.5], [1, 1, 1])) == 0

    def test_max_mean_shift_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            b = random_belief_vector(rng)
            shifted = belief_vector(
                b.means + 3.7, b.post_vars, b.sampling_vars, b.counts
            )
            assert select_max_posterior_mean(b) == select_max_posterior_mean(shifted)

    def test_optimal_pcs_equal_variances_matches_max_mean(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            means = rng.normal(size=4)
            b = belief_vector(means, [0.7] * 4)
            assert select_optimal_pcs(b) == select_max_posterior_mean(b)

    def test_optimal_pcs_two_alternatives_matches_max_mean(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            b = belief_vector(rng.normal(size=2), rng.uniform(0.1, 4.0, size=2))
            assert select_optimal_pcs(b) == select_max_posterior_mean(b)

    def test_optimal_pcs_against_monte_carlo(self):
        b = belief_vector([0.0, -0.01, -0.01], [4.0, 0.01, 0.01])
        rng = np.random.default_rng(3)
        n = 10**6
        draws = b.means + np.sqrt(b.post_vars) * rng.standard_normal((n, 3))
        mc = np.bincount(np.argmax(draws, axis=1), minlength=3) / n
        se = np.sqrt(mc * (1 - mc) / n)
        from ranksel.policies import _posterior_best_probability

        stds = np.sqrt(b.post_vars)
        for i in range(3):
            quad = _posterior_best_probability(b.means, stds, i, 1e-8)
            assert abs(quad - mc[i]) < 3 * max(se[i], 1e-5)
        assert select_optimal_pcs(b) == int(np.argmax(mc))

    def test_optimal_pcs_k_cap(self):
        b = random_belief_vector(np.random.default_rng(4), k=5)
        with pytest.raises(ValueError):
            select_optimal_pcs(b, max_k=3)


class TestEocValue:
    def test_symmetric_standard_normals(self):
        b = belief_vector([0.0, 0.0], [1.0, 1.0])
        assert eoc_value(b) == pytest.approx(-1.0 / math.sqrt(math.pi), abs=1e-7)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        b = random_belief_vector(rng, k=3)
        shifted = belief_vector(b.means + 11.0, b.post_vars, b.sampling_vars, b.counts)
        assert eoc_value(shifted) == pytest.approx(eoc_value(b), abs=1e-6)

    def test_vanishing_variances_vanishing_cost(self):
        # Opportunity cost shrinks toward zero as posteriors concentrate;
        # at tiny variances the truth is below the quadrature tolerance.
        wide = eoc_value(belief_vector([1.0, 0.0, -0.5], [1.0] * 3))
        narrow = eoc_value(belief_vector([1.0, 0.0, -0.5], [1e-2] * 3))
        assert wide < -1e-3
        assert narrow <= 0 + 1e-7
        assert abs(narrow) < abs(wide)

    def test_selection_is_max_mean(self):
        b = belief_vector([0.2, 0.9, -1.0], [2.0, 0.1, 0.4])
        assert select_optimal_eoc(b) == 1


class TestDistanceFeature:
    def test_two_alternative_value(self):
        _, d = distance_feature(belief_vector([1.0, 0.0], [1.0, 1.0]))
        assert d == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)

    def test_tied_top_means_zero(self):
        _, d = distance_feature(belief_vector([0.7, 0.7, 0.0], [1.0, 1.0, 1.0]))
        assert d == 0.0

    def test_scale_invariance(self):
        b = belief_vector([2.0, 1.0, -1.0], [1.0, 0.5, 2.0])
        c = 3.0
        scaled = belief_vector(b.means * c, b.post_vars * c**2, b.sampling_vars, b.counts)
        d_others, d = distance_feature(b)
        d_others_s, d_s = distance_feature(scaled)
        np.testing.assert_allclose(d_others_s, d_others, rtol=1e-12)
        assert d_s == pytest.approx(d, rel=1e-12)

    def test_degenerate_pair_rejected(self):
        with pytest.raises(ValueError):
            distance_feature(belief_vector([1.0, 1.0], [0.0, 0.0]))


class TestInducedCorrelation:
    def test_equal_variances_half(self):
        b = belief_vector([1.0, 0.0, -1.0], [0.8, 0.8, 0.8])
        assert induced_correlation(b, 1, 2) == pytest.approx(0.5, rel=1e-12)

    def test_vanishing_incumbent_variance(self):
        b = belief_vector([1.0, 0.0, -1.0], [0.0, 0.8, 0.8])
        assert induced_correlation(b, 1, 2) == 0.0

    def test_zero_challenger_variances_one(self):
        b = belief_vector([1.0, 0.0, -1.0], [0.8, 0.0, 0.0])
        assert induced_correlation(b, 1, 2) == pytest.approx(1.0, rel=1e-12)

    def test_incumbent_index_rejected(self):
        b = belief_vector([1.0, 0.0, -1.0], [0.8, 0.8, 0.8])
        with pytest.raises(ValueError):
            induced_correlation(b, 0, 2)


class TestFeatures:
    def test_correlation_feature_quarter(self):
        g1, g2 = features(belief_vector([1.0, 0.0, 0.0], [0.5, 0.5, 0.5]))
        assert g2 == pytest.approx(0.25, rel=1e-12)

    def test_tied_top_means_zero_gap_feature(self):
        g1, _ = features(belief_vector([1.0, 1.0, 0.0], [0.5, 0.5, 0.5]))
        assert g1 == 0.0

    def test_two_alternatives_correlation_zero(self):
        _, g2 = features(belief_vector([1.0, 0.0], [0.5, 0.5]))
        assert g2 == 0.0

    def test_gap_feature_grows_linearly_under_equal_allocation(self):
        # With a fixed mean gap and variances ~ s^2/t, the squared-gap
        # feature scales like t along an equal-allocation trajectory.
        gap, svar = 1.0, 2.0
        g_at = {}
        for t in (400, 800):
            b = belief_vector([gap, 0.0], [svar / t, svar / t])
            g_at[t], _ = features(b)
        assert 1.8 <= g_at[800] / g_at[400] <= 2.2


class TestAoap:
    def test_symmetric_example_ties(self):
        vals = aoap_values(belief_vector([1.0, 0.0], [1.0, 1.0]))
        np.testing.assert_allclose(vals, [2.0 / 3.0, 2.0 / 3.0], rtol=1e-12)

    def test_unequal_variance_example(self):
        b = belief_vector([1.0, 0.0], [1.0, 4.0])
        np.testing.assert_allclose(aoap_values(b), [2.0 / 9.0, 5.0 / 9.0], rtol=1e-12)
        assert aoap_allocate(b) == 1

    def test_shift_invariance_of_values(self):
        rng = np.random.default_rng(6)
        b = random_belief_vector(rng)
        shifted = belief_vector(b.means + 5.5, b.post_vars, b.sampling_vars, b.counts)
        np.testing.assert_allclose(aoap_values(shifted), aoap_values(b), rtol=1e-9)

    def test_exact_tie_prefers_fewer_samples_then_lower_index(self):
        b = belief_vector([1.0, 0.0], [1.0, 1.0], counts=[5, 2])
        assert aoap_allocate(b) == 1
        b2 = belief_vector([1.0, 0.0], [1.0, 1.0], counts=[3, 3])
        assert aoap_allocate(b2) == 0

    def test_values_dominate_current_distance(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            b = random_belief_vector(rng)
            g1 = distance_squared(b.means, b.post_vars)
            assert np.all(aoap_values(b) >= g1 - 1e-12)

    @given(
        shift=st.floats(-20, 20),
        scale=st.floats(0.1, 10),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=150, deadline=None)
    def test_decision_invariance(self, shift, scale, seed):
        """Adding a constant to means or scaling means and stds jointly by c > 0
        leaves the allocation decision unchanged."""
        b = random_belief_vector(np.random.default_rng(seed))
        moved = belief_vector(
            b.means * scale + shift,
            b.post_vars * scale**2,
            b.sampling_vars * scale**2,
            b.counts,
        )
        assert aoap_allocate(moved) == aoap_allocate(b)


class TestAoapMultistep:
    def test_depth_one_reproduces_single_step(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            b = random_belief_vector(rng)
            assert aoap_multistep(b, 1) == aoap_allocate(b)

    def test_depth_two_matches_pair_enumeration(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            b = random_belief_vector(rng, k=2)
            per_first = np.full(2, -math.inf)
            for i in range(2):
                for j in range(2):
                    extra = np.bincount([i, j], minlength=2)
                    v = shrunk_variance(b.post_vars, b.sampling_vars, extra)
                    v = np.where(extra > 0, v, b.post_vars)
                    per_first[i] = max(per_first[i], float(distance_squared(b.means, v)))
            # same tie rule as the policy: best value, then fewest samples,
            # then lowest index
            ties = np.flatnonzero(per_first == per_first.max())
            best_pair = min(ties, key=lambda i: (b.counts[i], i))
            assert aoap_multistep(b, 2) == best_pair

    def test_translation_invariance(self):
        rng = np.random.default_rng(10)
        b = random_belief_vector(rng, k=3)
        shifted = belief_vector(b.means - 2.2, b.post_vars, b.sampling_vars, b.counts)
        assert aoap_multistep(shifted, 3) == aoap_multistep(b, 3)

    def test_cap_enforced(self):
        b = random_belief_vector(np.random.default_rng(11), k=4)
        with pytest.raises(RuntimeError):
            aoap_multistep(b, 10, cap=1000)


class TestTwoFactor:
    def test_zero_correlation_weight_reduces_to_aoap(self):
        rng = np.random.default_rng(12)
        w = VfaWeights(np.array([1.0, 0.0]))
        for _ in range(100):
            b = random_belief_vector(rng)
            assert two_factor_allocate(b, w) == aoap_allocate(b)

    def test_zero_correlation_weight_exponential_activation(self):
        rng = np.random.default_rng(13)
        w = VfaWeights(np.array([1.0, 0.0]), activation="expm")
        for _ in range(50):
            b = random_belief_vector(rng)
            assert two_factor_allocate(b, w) == aoap_allocate(b)

    def test_two_alternatives_reduce_to_aoap(self):
        rng = np.random.default_rng(14)
        w = VfaWeights(np.array([0.98, 0.42]))
        for _ in range(50):
            b = random_belief_vector(rng, k=2)
            assert two_factor_allocate(b, w) == aoap_allocate(b)

    def test_monotone_activation_preserves_decision(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            b = random_belief_vector(rng)
            w_lin = VfaWeights(np.array([0.7, 0.9]))
            w_exp = VfaWeights(np.array([0.7, 0.9]), activation="expm")
            assert two_factor_allocate(b, w_lin) == two_factor_allocate(b, w_exp)

    def test_value_at_state(self):
        b = belief_vector([1.0, 0.0, 0.0], [0.5, 0.5, 0.5])
        w = VfaWeights(np.array([2.0, 4.0]))
        g1, g2 = features(b)
        assert two_factor_value(b, w) == pytest.approx(2 * g1 + 4 * g2, rel=1e-12)


class TestOptimalRatios:
    def test_equal_stds_split_evenly(self):
        truth = GroundTruth(means=[1.0, 0.0], variances=[1.0, 1.0])
        ratios, _ = optimal_ratios(truth)
        np.testing.assert_allclose(ratios.ratios, [0.5, 0.5], atol=1e-9)

    def test_two_to_one_stds(self):
        truth = GroundTruth(means=[1.0, 0.0], variances=[4.0, 1.0])
        ratios, _ = optimal_ratios(truth)
        np.testing.assert_allclose(ratios.ratios, [2 / 3, 1 / 3], atol=1e-9)

    def test_residuals_small(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            k = int(rng.integers(2, 7))
            means = np.sort(rng.normal(size=k) * 2)[::-1]
            means[0] = means[1] + rng.uniform(0.2, 1.0)
            truth = GroundTruth(means=means, variances=rng.uniform(0.3, 4.0, size=k))
            ratios, _ = optimal_ratios(truth)
            spread, defect = ratio_residuals(truth, ratios)
            assert spread < 1e-8 and defect < 1e-8

    def test_unique_solution_across_restarts(self):
        truth = GroundTruth(
            means=[3.0, 2.0, 1.0, 0.0], variances=[2.0, 1.0, 4.0, 1.5]
        )
        rng = np.random.default_rng(17)
        base, _ = optimal_ratios(truth)
        for _ in range(5):
            again, _ = optimal_ratios(truth, initial_share=rng.uniform(0.05, 0.95))
            np.testing.assert_allclose(again.ratios, base.ratios, atol=1e-6)

    def test_tied_best_rejected(self):
        truth = GroundTruth(means=[1.0, 1.0, 0.0], variances=[1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            optimal_ratios(truth)


class TestOcba:
    def test_two_alternative_ratio(self):
        ratios = ocba_ratios([1.0, 0.0], [2.0, 1.0])
        assert ratios.ratios[0] / ratios.ratios[1] == pytest.approx(2.0, rel=1e-12)

    def test_ratios_sum_to_one(self):
        rng = np.random.default_rng(18)
        for _ in range(50):
            k = int(rng.integers(2, 8))
            means = rng.normal(size=k)
            means[0] += 2.0
            ratios = ocba_ratios(means, rng.uniform(0.2, 3.0, size=k))
            assert abs(ratios.ratios.sum() - 1.0) < 1e-10

    def test_zero_gap_guard_warns(self):
        with pytest.warns(RuntimeWarning):
            ocba_ratios([1.0, 1.0, 0.0], [1.0, 1.0, 1.0])

    def test_deficits_vanish_at_proportional_counts(self):
        """Counts exactly proportional to the target ratios leave every
        deficit at zero; the tie then goes to the lowest index."""
        from ranksel.policies import argmax_with_tiebreak, ocba_deficits, ocba_ratio_core

        means = np.array([1.0, 0.3, 0.0])
        svars = np.array([1.0, 2.0, 0.5])
        ratios, _ = ocba_ratio_core(means, svars)
        total = float(ratios.sum()) * 120.0
        counts = total * ratios / ratios.sum()
        deficits = ocba_deficits(means, svars, counts)
        np.testing.assert_allclose(deficits, 0.0, atol=1e-10)
        assert argmax_with_tiebreak(np.zeros(3), np.full(3, 40.0)) == 0

    def test_most_starving_feeds_underfunded_alternative(self):
        b = belief_vector([1.0, 0.0, 0.0], [0.5] * 3, counts=[9, 1, 1])
        assert ocba_most_starving_allocate(b) in (1, 2)


class TestKnowledgeGradient:
    def test_identical_beliefs_tie_to_first(self):
        b = belief_vector([0.5] * 3, [1.0] * 3, counts=[2, 2, 2])
        assert kg_allocate(b) == 0

    def test_factors_nonnegative(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            assert np.all(kg_factors(random_belief_vector(rng)) >= 0)

    def test_factor_matches_monte_carlo(self):
        b = belief_vector([0.3, 0.0], [0.8, 0.5], sampling_vars=[1.0, 2.0])
        factors = kg_factors(b)
        rng = np.random.default_rng(20)
        n = 10**6
        z = rng.standard_normal(n)
        for i in (0, 1):
            new_var = shrunk_variance(b.post_vars, b.sampling_vars)[i]
            s = math.sqrt(b.post_vars[i] - new_var)
            new_mean = b.means[i] + s * z
            other = b.means[1 - i]
            improvement = np.maximum(new_mean, other) - max(b.means)
            mc = improvement.mean()
            se = improvement.std(ddof=1) / math.sqrt(n)
            assert abs(factors[i] - mc) < 3 * se

    def test_all_zero_variance_rejected(self):
        b = belief_vector([1.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            kg_factors(b)


class TestEqualAllocation:
    def test_first_step(self):
        assert ea_allocate(0, 3) == 0

    def test_sixth_step(self):
        assert ea_allocate(5, 3) == 2

    def test_round_robin_balance(self):
        k, m = 4, 7
        counts = np.zeros(k, dtype=int)
        for t in range(k * m):
            counts[ea_allocate(t, k)] += 1
        assert np.all(counts == m)
