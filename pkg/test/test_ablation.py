# test/test_ablation.py

from pathlib import Path

import pytest

from gmpo_lab.core.ablation import ablation_cells, comparison_frame, win_counts
from gmpo_lab.core.rollout import ObjectiveKind
from gmpo_lab.core.trainer import train
from gmpo_lab.models.experiment_config import load_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SEEDS = range(5)
REQUIRED_WINS = 4
COMPARED_CELLS = ("GRPO", "GMPO", "GMPO_SEQCLIP")


@pytest.fixture(scope="module")
def copy_wins():
    base = load_config(CONFIG_DIR / "copy_default.json")
    cells = [c for c in ablation_cells(base, with_thresholds=False) if c.name in COMPARED_CELLS]
    results = [
        (cell.name, train(cell.config.model_copy(update={'seed': seed})).summary)
        for cell in cells
        for seed in SEEDS
    ]
    df = comparison_frame(results)
    return {(w.criterion, w.winner, w.loser): w for w in win_counts(df)}


@pytest.mark.slow
@pytest.mark.parametrize("criterion, loser", [
    ("envelope_narrower", "GRPO"),
    ("envelope_narrower", "GMPO_SEQCLIP"),
    ("entropy_higher_or_equal", "GRPO"),
    ("kl_ref_lower_or_equal", "GRPO"),
    ("reward_higher_or_equal", "GRPO"),
])
def test_gmpo_wins_on_copy_task(copy_wins, criterion, loser):
    count = copy_wins[(criterion, "GMPO", loser)]
    assert count.seeds == len(SEEDS)
    assert count.wins >= REQUIRED_WINS, f"{criterion} vs {loser}: {count.wins}/{count.seeds}"


@pytest.fixture(scope="module")
def parity_summaries():
    base = load_config(CONFIG_DIR / "parity_default.json")
    return {
        kind: train(base.model_copy(update={'objective': kind})).summary
        for kind in (ObjectiveKind.GRPO, ObjectiveKind.GMPO)
    }


@pytest.mark.slow
@pytest.mark.parametrize("kind", [ObjectiveKind.GRPO, ObjectiveKind.GMPO])
def test_parity_default_config_learns(parity_summaries, kind):
    assert parity_summaries[kind].final_mean_reward >= 0.9


@pytest.mark.slow
@pytest.mark.parametrize("kind", [ObjectiveKind.GRPO, ObjectiveKind.GMPO])
def test_reward_trends_upward(parity_summaries, kind):
    summary = parity_summaries[kind]
    assert summary.final_reward_moving_average > summary.initial_reward_moving_average
