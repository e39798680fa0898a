# test/test_telemetry.py

import math

import numpy as np
import pytest

from gmpo_lab.core.constants import TELEMETRY_COLUMNS
from gmpo_lab.core.exceptions import InvalidArgumentError, MissingTelemetryError, OutputWriteError
from gmpo_lab.core.policy import PolicyParams, log_softmax
from gmpo_lab.core.rollout import Rollout
from gmpo_lab.core.telemetry import (
    StepTelemetry, kl_estimate, moving_average, ratio_envelope, read_csv,
    records_from_frame, write_csv
)
from gmpo_lab.core.utils.hashing import derive_rng


def record(update=0, **overrides):
    values = dict(
        round=0, update=update, ratio_log_min=-0.1, ratio_log_max=0.25, mean_entropy=1.0986,
        kl_ref=0.001, kl_old=0.0, mean_reward=0.375, clip_fraction=0.125, objective_value=-1e-17,
    )
    values.update(overrides)
    return StepTelemetry(**values)


def rollout_with_ratios(d, mask=None):
    d = np.asarray(d, dtype=np.float64)
    old = np.full(d.size, -1.5)
    return Rollout(0, np.zeros(d.size, dtype=np.int64), old, mask), old + d


class TestRatioEnvelope:
    def test_identity(self):
        r, new = rollout_with_ratios([0.0, 0.0])
        assert ratio_envelope([r.old_logps], [r]) == (0.0, 0.0)

    def test_min_max(self):
        r1, n1 = rollout_with_ratios([-0.3, 0.1])
        r2, n2 = rollout_with_ratios([0.5])
        low, high = ratio_envelope([n1, n2], [r1, r2])
        assert low == pytest.approx(-0.3)
        assert high == pytest.approx(0.5)

    def test_masked_tokens_excluded(self):
        r, new = rollout_with_ratios([9.0, 0.2], mask=[False, True])
        low, high = ratio_envelope([new], [r])
        assert low == pytest.approx(0.2)
        assert high == pytest.approx(0.2)

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            ratio_envelope([], [])


class TestKlEstimate:
    def test_same_policy_is_zero(self):
        params = PolicyParams(derive_rng(0).normal(size=(16, 3)), context_order=1)
        rollouts = [Rollout(0, np.array([0, 2, 1]), np.full(3, -1.0))]
        assert kl_estimate(params, params.snapshot(), rollouts) == 0.0

    def test_matches_exact_kl_single_bucket(self):
        current = PolicyParams(np.array([[1.0, 0.0, -0.5]]), context_order=0)
        reference = PolicyParams(np.array([[0.0, 0.3, 0.0]]), context_order=0)
        log_p = log_softmax(current.logit_table[0])
        log_q = log_softmax(reference.logit_table[0])
        exact = float(np.sum(np.exp(log_p) * (log_p - log_q)))

        rng = derive_rng(42)
        rollouts = []
        for _ in range(1000):
            tokens = rng.choice(3, size=100, p=np.exp(log_p))
            rollouts.append(Rollout(0, tokens, log_p[tokens]))
        estimate = kl_estimate(current, reference, rollouts)

        samples = np.concatenate([(log_p - log_q)[r.tokens] for r in rollouts])
        std_error = samples.std() / math.sqrt(samples.size)
        assert abs(estimate - exact) < 4 * std_error

    def test_saturated_reference_is_large_but_finite(self):
        current = PolicyParams(np.array([[0.0, 0.0]]), context_order=0)
        reference = PolicyParams(np.array([[60.0, -60.0]]), context_order=0)
        rollouts = [Rollout(0, np.array([1]), np.array([math.log(0.5)]))]
        value = kl_estimate(current, reference, rollouts)
        assert math.isfinite(value)
        assert value > 100.0


class TestCsv:
    def test_empty_series_is_header_only(self, tmp_path):
        path = write_csv([], tmp_path / "telemetry.csv")
        assert path.read_text(encoding="utf-8") == ",".join(TELEMETRY_COLUMNS) + "\n"

    def test_two_records_three_lines(self, tmp_path):
        path = write_csv([record(0), record(1)], tmp_path / "telemetry.csv")
        lines = path.read_bytes().split(b"\n")
        assert len(lines) == 4 and lines[-1] == b""
        assert lines[0].decode() == ",".join(TELEMETRY_COLUMNS)

    def test_reserialization_is_byte_identical(self, tmp_path):
        records = [record(0, ratio_log_max=0.1 + 0.2), record(1, kl_ref=1 / 3, objective_value=2.5e-300)]
        first = write_csv(records, tmp_path / "a.csv")
        parsed = records_from_frame(read_csv(first))
        second = write_csv(parsed, tmp_path / "b.csv")
        assert first.read_bytes() == second.read_bytes()
        assert parsed[0].ratio_log_max == 0.1 + 0.2

    def test_write_failure_names_path(self, tmp_path):
        target = tmp_path / "missing" / "telemetry.csv"
        with pytest.raises(OutputWriteError, match="telemetry.csv"):
            write_csv([record()], target)

    def test_read_missing_file(self, tmp_path):
        with pytest.raises(MissingTelemetryError):
            read_csv(tmp_path / "nope.csv")


class TestStepTelemetry:
    def test_envelope_width(self):
        assert record().envelope_width == pytest.approx(0.35)

    def test_rejects_inverted_envelope(self):
        with pytest.raises(InvalidArgumentError):
            record(ratio_log_min=0.5, ratio_log_max=0.1)

    def test_rejects_clip_fraction_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            record(clip_fraction=1.5)


class TestMovingAverage:
    def test_window_one_is_identity(self):
        values = [0.3, -1.0, 2.5]
        assert moving_average(values, 1).tolist() == values

    def test_prefix_means(self):
        assert moving_average([1.0, 2.0, 3.0, 4.0], 3).tolist() == pytest.approx([1.0, 1.5, 2.0, 3.0])

    def test_invalid_window(self):
        with pytest.raises(InvalidArgumentError):
            moving_average([1.0], 0)
