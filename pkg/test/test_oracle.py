# test/test_oracle.py

import math

import numpy as np
import pytest

from gmpo_lab.core.constants import FINITE_DIFF_STEP, KINK_MARGIN_STEPS
from gmpo_lab.core.exceptions import InvalidArgumentError, OracleDomainError
from gmpo_lab.core.objectives import gmpo_rollout_objective, grpo_rollout_objective, rollout_objective
from gmpo_lab.core.oracle import (
    amgm_sweep, finite_diff_objective_grad, grad_check, linear_space_objective,
    random_grad_instance
)
from gmpo_lab.core.policy import PolicyParams
from gmpo_lab.core.rollout import ClipConfig, ClipMode, ObjectiveKind, Rollout
from gmpo_lab.core.trainer import minibatch_gradient
from gmpo_lab.core.utils.hashing import derive_rng


def rollout_with_ratios(d):
    d = np.asarray(d, dtype=np.float64)
    old = np.full(d.size, -3.0)
    return Rollout(0, np.zeros(d.size, dtype=np.int64), old), old + d


class TestLinearSpaceObjective:
    @pytest.mark.parametrize("kind", list(ObjectiveKind))
    def test_identity_ratios_return_advantage(self, kind):
        rollout, new = rollout_with_ratios([0.0, 0.0, 0.0])
        value = linear_space_objective(new, rollout, -0.75, kind, kind.default_clip())
        assert value == pytest.approx(-0.75)

    @pytest.mark.parametrize("d, advantage", [(0.6, 1.0), (-0.6, -1.0), (0.1, -2.0), (-0.3, 0.5)])
    def test_single_token_agrees_with_log_space(self, d, advantage):
        rollout, new = rollout_with_ratios([d])
        for kind in ObjectiveKind:
            clip = ClipConfig.symmetric(0.4)
            expected = rollout_objective(kind, new, rollout, advantage, clip).value
            assert linear_space_objective(new, rollout, advantage, kind, clip) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kind", list(ObjectiveKind))
    def test_agrees_with_log_space_on_random_rollouts(self, kind):
        rng = derive_rng(5)
        for _ in range(1000):
            size = int(rng.integers(1, 13))
            rollout, new = rollout_with_ratios(np.clip(rng.normal(0.0, 0.5, size=size), -4.9, 4.9))
            advantage = float(rng.normal())
            clip = ClipConfig.symmetric(float(rng.choice([0.1, 0.2, 0.4])))
            expected = rollout_objective(kind, new, rollout, advantage, clip).value
            actual = linear_space_objective(new, rollout, advantage, kind, clip)
            assert actual == pytest.approx(expected, rel=1e-12, abs=0.0)

    def test_refuses_long_rollouts(self):
        rollout, new = rollout_with_ratios([0.0] * 13)
        with pytest.raises(OracleDomainError):
            linear_space_objective(new, rollout, 1.0, ObjectiveKind.GMPO, ClipConfig.disabled())

    def test_refuses_large_ratios(self):
        rollout, new = rollout_with_ratios([6.0])
        with pytest.raises(OracleDomainError):
            linear_space_objective(new, rollout, 1.0, ObjectiveKind.GRPO, ClipConfig.disabled())


class TestFiniteDifferences:
    def test_zero_advantage_gives_zero_gradient(self):
        params = PolicyParams(derive_rng(1).normal(size=(8, 3)), context_order=1)
        items = [(Rollout(3, [0, 2], [-1.0, -1.2]), 0.0), (Rollout(3, [1], [-0.9]), 0.0)]
        for kind in ObjectiveKind:
            clip = kind.default_clip()
            numeric = finite_diff_objective_grad(params, items, kind, clip)
            analytic = minibatch_gradient(params, items, kind, clip).gradient
            np.testing.assert_array_equal(analytic, 0.0)
            np.testing.assert_allclose(numeric, 0.0, atol=1e-12)

    def test_matches_analytic_gradient(self):
        for index in range(10):
            inst = random_grad_instance(seed=7, index=index)
            numeric = finite_diff_objective_grad(inst.params, inst.items, inst.kind, inst.clip)
            analytic = minibatch_gradient(inst.params, inst.items, inst.kind, inst.clip).gradient
            scale = max(np.abs(analytic).max(), 1e-12)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6 * scale)

    def test_nearly_cancelling_component(self):
        # deux ratios à 1e-8 près, avantages opposés: les entrées valent ~1e-9
        params = PolicyParams(np.zeros((1, 3)), context_order=0)
        items = [(Rollout(0, [1], [-1.2]), 1.0), (Rollout(0, [1], [-1.2 + 1e-8]), -1.0)]
        kind = ObjectiveKind.GRPO
        numeric = finite_diff_objective_grad(params, items, kind, kind.default_clip())
        analytic = minibatch_gradient(params, items, kind, kind.default_clip()).gradient
        assert 1e-9 < abs(analytic[0, 1]) < 1e-8
        np.testing.assert_allclose(numeric, analytic, rtol=1e-6, atol=0.0)

    def test_precision_on_random_instances(self):
        for index in range(20):
            inst = random_grad_instance(seed=11, index=index)
            numeric = finite_diff_objective_grad(inst.params, inst.items, inst.kind, inst.clip)
            analytic = minibatch_gradient(inst.params, inst.items, inst.kind, inst.clip).gradient
            np.testing.assert_allclose(numeric, analytic, rtol=1e-9, atol=1e-12)

    def test_rejects_bad_step(self):
        params = PolicyParams(np.zeros((2, 2)))
        with pytest.raises(InvalidArgumentError):
            finite_diff_objective_grad(params, [(Rollout(0, [0], [-1.0]), 1.0)], ObjectiveKind.GMPO,
                                       ClipConfig.disabled(), h=0.0)

    def test_instances_avoid_clip_kinks(self):
        margin = KINK_MARGIN_STEPS * FINITE_DIFF_STEP
        for index in range(30):
            inst = random_grad_instance(seed=3, index=index)
            if inst.kind is ObjectiveKind.GMPO_SEQCLIP:
                continue
            lower, upper = inst.kind.resolve_clip(inst.clip).bounds
            kinks = [k for k in (lower, upper, -lower, -upper) if math.isfinite(k)]
            for rollout, _ in inst.items:
                buckets_new = minibatch_gradient(inst.params, [(rollout, 1.0)], inst.kind, inst.clip).new_logps[0]
                d = (buckets_new - rollout.old_logps)[rollout.mask]
                assert all(abs(x - k) >= margin for x in d for k in kinks)

    def test_instances_are_reproducible(self):
        a = random_grad_instance(seed=2, index=4)
        b = random_grad_instance(seed=2, index=4)
        assert a.description == b.description


class TestGradCheck:
    def test_passes_and_covers_clipping(self):
        report = grad_check(instances=100, seed=0)
        assert report.passed
        assert report.max_rel_error < 1e-6
        assert report.support_mismatches == 0
        assert report.clipped_instances >= 30
        assert report.worst_instance is not None

    def test_rejects_zero_instances(self):
        with pytest.raises(InvalidArgumentError):
            grad_check(instances=0)


class TestAmgm:
    def test_four_and_one(self):
        rollout, new = rollout_with_ratios(np.log([4.0, 1.0]))
        clip = ClipConfig.disabled()
        grpo = grpo_rollout_objective(new, rollout, 1.0, clip).value
        gmpo = gmpo_rollout_objective(new, rollout, 1.0, clip).value
        assert grpo == pytest.approx(2.5)
        assert gmpo == pytest.approx(2.0)
        assert abs(gmpo) < abs(grpo)

    def test_equal_ratios_give_equality(self):
        rollout, new = rollout_with_ratios([0.3] * 7)
        clip = ClipConfig(-math.inf, math.inf, ClipMode.NONE)
        grpo = grpo_rollout_objective(new, rollout, -1.7, clip).value
        gmpo = gmpo_rollout_objective(new, rollout, -1.7, clip).value
        assert gmpo == pytest.approx(grpo, abs=1e-9)

    def test_sweep_has_no_violations(self):
        report = amgm_sweep(instances=10_000, seed=1)
        assert report.passed
        assert report.violations == 0
        assert report.worst_margin >= -1e-12
        assert report.max_equality_error <= 1e-9

    def test_rejects_zero_instances(self):
        with pytest.raises(InvalidArgumentError):
            amgm_sweep(instances=0)
