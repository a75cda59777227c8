"""Tests for Gaussian fusion, ensemble aggregation and the gating schedule."""

import math

import numpy as np
import pytest
from conftest import gaussian
from hypothesis import given, settings
from hypothesis import strategies as st

from mcf_nav.errors import InsufficientEnsembleError, InvalidDistributionError, ParameterError
from mcf_nav.gaussfuse import (
    DiagGaussian2,
    Gaussian1,
    GatingSchedule,
    aggregate_ensemble,
    alpha_at,
    apply_noise,
    disagreement,
    fuse_gated,
    fuse_product,
    sample,
    sample_with_noise,
)

means = st.floats(min_value=-1.0, max_value=1.0)
variances = st.floats(min_value=0.01, max_value=2.0)
alphas = st.floats(min_value=0.0, max_value=1.0)


def grid_fusion(m1: float, v1: float, m2: float, v2: float, a: float) -> tuple[float, float]:
    """Mean and variance of the normalised density p1**(1-a) * p2**a, by quadrature."""
    x = np.linspace(-15.0, 15.0, 300_001)
    log_density = -(1.0 - a) * (x - m1) ** 2 / (2.0 * v1) - a * (x - m2) ** 2 / (2.0 * v2)
    density = np.exp(log_density - log_density.max())
    density /= density.sum()
    mean = float((x * density).sum())
    var = float(((x - mean) ** 2 * density).sum())
    return mean, var


class TestProduct:
    """Plain product of two Gaussians."""

    def test_equal_variances_give_midpoint(self):
        fused = fuse_product(gaussian(0.0, 1.0, -0.4, 0.5), gaussian(1.0, 1.0, 0.4, 0.5))
        assert fused.v.mean == pytest.approx(0.5)
        assert fused.v.var == pytest.approx(0.5)
        assert fused.w.mean == pytest.approx(0.0)
        assert fused.w.var == pytest.approx(0.25)

    def test_confident_policy_dominates(self):
        fused = fuse_product(gaussian(0.3, 1e-6, 0.0, 1e-6), gaussian(0.9, 0.2, 0.5, 0.2))
        assert abs(fused.v.mean - 0.3) < 1e-3
        assert abs(fused.w.mean - 0.0) < 1e-3

    def test_uncertain_policy_defers_to_prior(self):
        prior = gaussian(0.8, 0.2, -0.5, 0.2)
        fused = fuse_product(gaussian(-0.5, 10.0, 0.7, 10.0), prior)
        # moves less than 2% of the way from the prior toward the policy
        assert abs(fused.v.mean - prior.v.mean) < 0.02 * abs(-0.5 - 0.8)
        assert abs(fused.w.mean - prior.w.mean) < 0.02 * abs(0.7 - -0.5)

    @given(means, variances, means, variances)
    def test_variance_never_exceeds_inputs(self, m1, v1, m2, v2):
        fused = fuse_product(gaussian(m1, v1, m2, v2), gaussian(m2, v2, m1, v1))
        assert fused.v.var <= min(v1, v2) + 1e-15
        assert fused.w.var <= min(v1, v2) + 1e-15

    @given(means, variances, means, variances)
    def test_mean_between_inputs(self, m1, v1, m2, v2):
        fused = fuse_product(gaussian(m1, v1, 0.0, 1.0), gaussian(m2, v2, 0.0, 1.0))
        assert min(m1, m2) <= fused.v.mean <= max(m1, m2)

    def test_rejects_invalid_variance(self):
        with pytest.raises(InvalidDistributionError):
            fuse_product(gaussian(0.0, 0.0, 0.0, 1.0), gaussian(0.0, 1.0, 0.0, 1.0))

    def test_rejects_non_finite_mean(self):
        with pytest.raises(InvalidDistributionError):
            fuse_product(gaussian(math.nan, 1.0, 0.0, 1.0), gaussian(0.0, 1.0, 0.0, 1.0))


class TestGated:
    """Gated (powered) product."""

    def test_alpha_zero_returns_policy_exactly(self):
        policy = gaussian(0.123, 0.456, -0.789, 0.0123)
        assert fuse_gated(policy, gaussian(0.9, 0.09, 0.1, 0.09), 0.0) == policy

    def test_alpha_one_returns_prior_exactly(self):
        prior = gaussian(0.9, 0.09, 0.1, 0.09)
        assert fuse_gated(gaussian(0.123, 0.456, -0.789, 0.0123), prior, 1.0) == prior

    def test_half_gate_with_equal_variances(self):
        fused = fuse_gated(gaussian(0.0, 0.5, 0.0, 0.5), gaussian(1.0, 0.5, 1.0, 0.5), 0.5)
        assert fused.v.mean == pytest.approx(0.5)
        assert fused.v.var == pytest.approx(0.5)

    @pytest.mark.parametrize("alpha", [-0.01, 1.01, math.nan])
    def test_rejects_alpha_outside_unit_interval(self, alpha):
        with pytest.raises(ParameterError):
            fuse_gated(gaussian(0.0, 1.0, 0.0, 1.0), gaussian(0.0, 1.0, 0.0, 1.0), alpha)

    @settings(max_examples=200, deadline=None)
    @given(means, variances, means, variances, alphas)
    def test_matches_grid_oracle(self, m1, v1, m2, v2, a):
        fused = fuse_gated(gaussian(m1, v1, m1, v1), gaussian(m2, v2, m2, v2), a)
        mean, var = grid_fusion(m1, v1, m2, v2, a)
        np.testing.assert_allclose(fused.v.mean, mean, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(fused.v.var, var, rtol=1e-4)

    @settings(max_examples=100, deadline=None)
    @given(means, variances, means, variances)
    def test_product_matches_grid_oracle(self, m1, v1, m2, v2):
        fused = fuse_product(gaussian(m1, v1, m1, v1), gaussian(m2, v2, m2, v2))
        # the plain product is the gated form at a = 1/2 with doubled precision
        mean, var = grid_fusion(m1, v1 / 2.0, m2, v2 / 2.0, 0.5)
        np.testing.assert_allclose(fused.w.mean, mean, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(fused.w.var, var, rtol=1e-4)


class TestAggregateEnsemble:
    def test_population_variance(self):
        means = [[0.0, 0.1], [0.2, 0.1], [0.4, 0.1], [0.2, 0.1], [0.2, 0.1]]
        dist = aggregate_ensemble(means)
        assert dist.v.mean == pytest.approx(0.2)
        assert dist.v.var == pytest.approx(0.016)

    def test_identical_members_hit_epsilon_floor(self):
        dist = aggregate_ensemble([[0.3, -0.2]] * 5, epsilon=1e-6)
        assert dist.v.var == 1e-6
        assert dist.w.var == 1e-6

    def test_needs_two_members(self):
        with pytest.raises(InsufficientEnsembleError):
            aggregate_ensemble([[0.1, 0.2]])

    def test_rejects_bad_shape(self):
        with pytest.raises(ParameterError):
            aggregate_ensemble([[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]])


class TestGatingSchedule:
    def test_default_starts_near_one_and_ends_near_zero(self):
        schedule = GatingSchedule.default(50_000)
        assert alpha_at(schedule, 0) > 0.95
        assert alpha_at(schedule, 50_000) < 0.05
        assert alpha_at(schedule, schedule.midpoint_step) == pytest.approx(0.5)

    def test_monotone_non_increasing(self):
        schedule = GatingSchedule.default(1000)
        values = [alpha_at(schedule, t) for t in range(0, 1001, 7)]
        assert all(a >= b for a, b in zip(values, values[1:], strict=False))

    def test_extreme_steps_stay_finite(self):
        schedule = GatingSchedule(midpoint_step=10, steepness=5.0, total_steps=20)
        assert alpha_at(schedule, 10_000_000) == 0.0
        assert alpha_at(schedule, 0) == pytest.approx(1.0)

    def test_negative_step_rejected(self):
        with pytest.raises(ParameterError):
            alpha_at(GatingSchedule.default(100), -1)

    def test_midpoint_beyond_run_rejected(self):
        with pytest.raises(ParameterError):
            GatingSchedule(midpoint_step=200, steepness=0.1, total_steps=100)

    def test_first_step_is_close_to_prior(self):
        schedule = GatingSchedule.default(50_000)
        policy = gaussian(-0.2, math.exp(-1.0), 0.5, math.exp(-1.0))
        prior = gaussian(0.7, 0.09, -0.3, 0.09)
        fused = fuse_gated(policy, prior, alpha_at(schedule, 0))
        assert abs(fused.v.mean - prior.v.mean) < 0.01
        assert fused.v.var == pytest.approx(prior.v.var, rel=0.02)


class TestSampling:
    def test_samples_are_clamped(self, rng):
        dist = gaussian(5.0, 0.01, -5.0, 0.01)
        for _ in range(20):
            assert sample(dist, rng) == (1.0, -1.0)

    def test_noise_reconstructs_action(self, rng):
        dist = gaussian(0.2, 0.3, -0.1, 0.05)
        for _ in range(50):
            action, noise = sample_with_noise(dist, rng)
            assert apply_noise(dist, noise) == action

    def test_zero_noise_gives_mean(self):
        assert apply_noise(gaussian(0.2, 0.3, -0.1, 0.05), (0.0, 0.0)) == (0.2, -0.1)

    def test_sample_is_seed_deterministic(self):
        dist = gaussian(0.0, 0.5, 0.0, 0.5)
        a = [sample(dist, np.random.default_rng(7)) for _ in range(3)]
        b = [sample(dist, np.random.default_rng(7)) for _ in range(3)]
        assert a == b


def test_row_roundtrip():
    dist = gaussian(0.1, 0.2, 0.3, 0.4)
    assert dist.to_row() == (0.1, 0.2, 0.3, 0.4)
    assert DiagGaussian2.from_row(dist.to_row()) == dist


def test_disagreement():
    assert disagreement(gaussian(0.1, 1, 0.5, 1), gaussian(0.4, 1, -0.5, 1)) == pytest.approx((0.3, 1.0))


def test_gaussian1_std():
    assert Gaussian1(0.0, 4.0).std == 2.0


def test_worked_product_example():
    fused = fuse_product(gaussian(0.5, 0.04, 0.5, 0.04), gaussian(0.2, 0.2, 0.2, 0.2))
    assert fused.v.mean == pytest.approx(0.45)
    assert fused.v.var == pytest.approx(0.2 * 0.04 / 0.24)


@settings(max_examples=100, deadline=None)
@given(means, variances, means, variances)
def test_half_gate_doubles_product_variance(m1, v1, m2, v2):
    policy, prior = gaussian(m1, v1, m2, v2), gaussian(m2, v2, m1, v1)
    gated = fuse_gated(policy, prior, 0.5)
    product = fuse_product(policy, prior)
    assert gated.v.mean == pytest.approx(product.v.mean, rel=1e-12, abs=1e-12)
    assert gated.v.var == pytest.approx(2.0 * product.v.var, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(means, variances, means, variances)
def test_less_certain_policy_moves_toward_prior(m1, v1, m2, v2):
    prior = gaussian(m2, v2, m2, v2)
    sharp = fuse_product(gaussian(m1, v1, m1, v1), prior)
    blurred = fuse_product(gaussian(m1, 2.0 * v1, m1, 2.0 * v1), prior)
    assert abs(blurred.v.mean - m2) <= abs(sharp.v.mean - m2) + 1e-12


def test_two_member_spread():
    dist = aggregate_ensemble([[-1.0, 0.0], [1.0, 0.0]])
    assert dist.v.mean == 0.0
    assert dist.v.var == pytest.approx(1.0)
