# test/test_trainer.py

import math

import numpy as np
import pytest

from gmpo_lab.core.exceptions import ConfigError, NonFiniteGradientError
from gmpo_lab.core.objectives import flatten_groups
from gmpo_lab.core.policy import PolicyParams, score
from gmpo_lab.core.rollout import ClipConfig, ObjectiveKind, Rollout, RolloutGroup
from gmpo_lab.core.tasks import CopyTask
from gmpo_lab.core.telemetry import write_csv
from gmpo_lab.core.trainer import (
    Trainer, collect_round, inner_update, minibatch_gradient,
    partition_minibatches, round_prompts, train
)
from gmpo_lab.core.utils.hashing import derive_rng
from gmpo_lab.models.experiment_config import PolicyConfig, TaskConfig, TrainConfig


def small_config(**overrides):
    values = dict(
        objective=ObjectiveKind.GMPO,
        group_size=4,
        prompts_per_round=4,
        inner_updates=2,
        step_size=2.0,
        total_rounds=2,
        seed=11,
        task=TaskConfig(name="copy", alphabet_size=3, min_target_len=2, max_target_len=2, num_prompts=4, max_len=3),
        policy=PolicyConfig(num_buckets=256, context_order=2),
    )
    values.update(overrides)
    return TrainConfig(**values)


class TestCollection:
    def test_single_prompt_single_group(self):
        config = small_config(group_size=2, prompts_per_round=1, inner_updates=1,
                              task=TaskConfig(name="copy", num_prompts=1, max_len=5))
        trainer = Trainer(config)
        groups = collect_round(trainer.old, trainer.task, config, 0)
        assert len(groups) == 1
        assert groups[0].size == 2
        assert groups[0].advantages.mean() == pytest.approx(0.0, abs=1e-12)

    def test_collection_is_deterministic(self):
        config = small_config()
        a = collect_round(Trainer(config).old, Trainer(config).task, config, 3)
        b = collect_round(Trainer(config).old, Trainer(config).task, config, 3)
        for ga, gb in zip(a, b):
            for ra, rb in zip(ga.rollouts, gb.rollouts):
                np.testing.assert_array_equal(ra.tokens, rb.tokens)
                np.testing.assert_array_equal(ra.old_logps, rb.old_logps)

    def test_round_prompts_cycle(self):
        task = CopyTask(num_prompts=3)
        assert round_prompts(task, 4, 0) == [0, 1, 2, 0]
        assert round_prompts(task, 4, 1) == [1, 2, 0, 1]

    def test_empty_prompt_set(self):
        task = CopyTask(num_prompts=1)
        task.targets = []
        with pytest.raises(ConfigError):
            round_prompts(task, 2, 0)

    def test_partition_is_one_exact_pass(self):
        items = [(Rollout(0, [i % 3], [-1.0]), 0.0) for i in range(10)]
        parts = partition_minibatches(items, 3, derive_rng(0))
        assert len(parts) == 3
        assert sorted(id(r) for part in parts for r, _ in part) == sorted(id(r) for r, _ in items)
        assert sorted(len(p) for p in parts) == [3, 3, 4]


class TestInnerUpdate:
    def test_first_update_has_identity_ratios(self):
        config = small_config(inner_updates=1)
        trainer = Trainer(config)
        groups = collect_round(trainer.old, trainer.task, config, 0)
        items = flatten_groups(groups)
        record = inner_update(trainer.params, items, ObjectiveKind.GMPO, trainer.clip, 1.0, reference=trainer.reference)
        assert record.ratio_log_min == pytest.approx(0.0, abs=1e-12)
        assert record.ratio_log_max == pytest.approx(0.0, abs=1e-12)
        assert record.kl_old == pytest.approx(0.0, abs=1e-12)
        assert record.kl_ref == pytest.approx(0.0, abs=1e-12)
        assert record.clip_fraction == 0.0
        mean_advantage = float(np.mean([a for _, a in items]))
        assert record.objective_value == pytest.approx(mean_advantage, abs=1e-9)

    def test_zero_step_keeps_params(self):
        config = small_config()
        trainer = Trainer(config)
        items = flatten_groups(collect_round(trainer.old, trainer.task, config, 0))
        before = trainer.params.logit_table.copy()
        record = inner_update(trainer.params, items, ObjectiveKind.GRPO,
                              ObjectiveKind.GRPO.default_clip(), 0.0, reference=trainer.reference)
        np.testing.assert_array_equal(trainer.params.logit_table, before)
        assert record.update == 0

    def test_single_token_step_matches_closed_form(self):
        params = PolicyParams(np.zeros((1, 3)), context_order=0)
        rollout = Rollout(0, [1], [math.log(1 / 3)])
        step = 0.7
        expected = step * 1.0 * score(params, 0, 1) / 1
        inner_update(params, [(rollout, 1.0)], ObjectiveKind.GMPO, ClipConfig.symmetric(0.4), step,
                     reference=params.snapshot())
        np.testing.assert_allclose(params.logit_table[0], expected, atol=1e-15)

    def test_zero_advantage_group_contributes_nothing(self):
        params = PolicyParams(derive_rng(0).normal(size=(64, 4)), context_order=1)
        r1 = Rollout(0, [0, 1], [-1.0, -1.0])
        r2 = Rollout(0, [2, 3], [-0.5, -2.0])
        group = RolloutGroup.from_rewards([r1, r2], [1, 1])
        for kind in ObjectiveKind:
            mg = minibatch_gradient(params, group.items(), kind, kind.default_clip())
            assert np.all(mg.gradient == 0.0)

    def test_non_finite_gradient_aborts_with_dump(self):
        params = PolicyParams(np.zeros((4, 3)), context_order=0)
        rollout = Rollout(0, [0, 0, 0], [-800.0, -800.0, -800.0])
        with pytest.raises(NonFiniteGradientError) as excinfo:
            inner_update(params, [(rollout, 1.0)], ObjectiveKind.GMPO_NONORM, ClipConfig.disabled(), 1.0,
                         reference=params.snapshot(), round_index=4, update_index=1)
        dump = excinfo.value.dump
        assert dump["round"] == 4 and dump["update"] == 1
        assert dump["rollout"]["old_logps"] == [-800.0, -800.0, -800.0]
        assert excinfo.value.exit_code == 3


class TestTrain:
    def test_zero_rounds(self):
        result = train(small_config(total_rounds=0))
        assert result.telemetry == []
        assert np.all(result.params.logit_table == 0.0)
        assert result.summary.total_updates == 0
        assert result.summary.final_mean_reward is None

    def test_rows_per_round(self):
        result = train(small_config(total_rounds=2, inner_updates=2, epochs_per_round=2))
        assert len(result.telemetry) == 8
        assert [r.update for r in result.telemetry[:4]] == [0, 1, 2, 3]
        assert {r.round for r in result.telemetry} == {0, 1}

    def test_old_policy_synced_at_round_end(self):
        trainer = Trainer(small_config(total_rounds=1))
        trainer.run_round(0)
        np.testing.assert_array_equal(trainer.old.logit_table, trainer.params.logit_table)

    def test_identical_configs_give_identical_csv(self, tmp_path):
        config = small_config(total_rounds=3)
        a = write_csv(train(config).telemetry, tmp_path / "a.csv")
        b = write_csv(train(config).telemetry, tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_summary_metadata(self):
        summary = train(small_config(objective=ObjectiveKind.GRPO, total_rounds=1)).summary
        assert summary.metadata.advantage_std == "population"
        assert summary.metadata.minibatch_rollouts == 8
        assert summary.clip_upper_log == pytest.approx(math.log(1.2))
        assert 0.0 <= summary.greedy_pass_at_1 <= 1.0

    def test_no_clip_never_clips(self):
        result = train(small_config(objective=ObjectiveKind.GMPO_NOCLIP, total_rounds=2, step_size=20.0))
        assert all(r.clip_fraction == 0.0 for r in result.telemetry)

