"""Learning-curve checks over full training budgets.

These take minutes (bandit) to tens of minutes (observer) and are deselected
by default. Run them with `pytest -m slow`.
"""

import os

import numpy as np
import pandas as pd
import pytest

from marlcpc import cli, stats
from marlcpc.checkpoint import loadCheckpoint
from marlcpc.config import applyOverrides, defaultConfig, getPreset
from marlcpc.train import FINAL_CHECKPOINT, METRICS_FILE, trainRun

seeds = list(range(10))
pytestmark = pytest.mark.slow


def train_seeds(tmp_path, env, condition, overrides=None):
    frames = list()
    for seed in seeds:
        config = defaultConfig(env, condition, seed=seed)
        config = applyOverrides(config, overrides or {})
        output_dir = trainRun(config, str(tmp_path / f"{condition}-{seed}"), quiet=True)
        frames.append(pd.read_csv(os.path.join(output_dir, METRICS_FILE)))
    return frames


def final_scores(frames, metric="welfare"):
    return np.array([f.dropna(subset=[metric])[metric].iloc[-1] for f in frames])


def scores_at(frames, fraction, metric="welfare"):
    values = list()
    for frame in frames:
        evaluated = frame.dropna(subset=[metric])
        target = fraction * evaluated["env_steps"].max()
        row = evaluated.iloc[(evaluated["env_steps"] - target).abs().argmin()]
        values.append(row[metric])
    return np.array(values)


def summary(scores):
    return stats.iqm(scores), stats.bootstrapCI(scores, seed=0)


def test_bandit(tmp_path):
    shared, _ = summary(final_scores(train_seeds(tmp_path, "bandit", "shared")))
    cpc, cpc_ci = summary(final_scores(train_seeds(tmp_path, "bandit", "cpc")))
    message, message_ci = summary(
        final_scores(train_seeds(tmp_path, "bandit", "message"))
    )
    silent, _ = summary(final_scores(train_seeds(tmp_path, "bandit", "no-comm")))
    assert shared >= 1.9
    assert cpc >= 1.8
    assert message <= 1.6 and silent <= 1.6
    assert cpc_ci[0] > message_ci[1]


def test_cooperative_bandit(tmp_path):
    runs = {
        condition: train_seeds(tmp_path, "bandit-coop", condition)
        for condition in ("no-comm", "message", "cpc", "shared")
    }
    final = {condition: stats.iqm(final_scores(f)) for condition, f in runs.items()}
    assert final["cpc"] >= final["message"]
    assert final["shared"] >= final["message"]
    assert final["no-comm"] == min(final.values())
    halfway = {c: stats.iqm(scores_at(runs[c], 0.5)) for c in ("message", "cpc")}
    assert halfway["message"] < halfway["cpc"]


def test_ablation_drops_welfare(tmp_path):
    welfare = {mode: list() for mode in ("none", "random", "zero")}
    for seed in seeds:
        config = defaultConfig("bandit", "cpc", seed=seed)
        output_dir = trainRun(config, str(tmp_path / f"cpc-{seed}"), quiet=True)
        checkpoint = loadCheckpoint(os.path.join(output_dir, FINAL_CHECKPOINT))
        report = cli.ablationReport(checkpoint, list(welfare), 100, seed=seed)
        for mode, mean in zip(report["mode"], report["mean"]):
            welfare[mode].append(mean)

    intact, intact_ci = summary(np.array(welfare["none"]))
    assert intact >= 1.8
    for mode in ("random", "zero"):
        ablated, ablated_ci = summary(np.array(welfare[mode]))
        assert intact - ablated >= 0.2
        assert ablated_ci[1] < intact_ci[0]


def test_observer_desk(tmp_path):
    desk = getPreset("observer-desk")
    results = dict()
    for condition in ("no-comm", "message", "cpc", "shared"):
        frames = train_seeds(tmp_path, "observer", condition, desk)
        results[condition] = {
            metric: summary(final_scores(frames, metric))
            for metric in ("welfare", "episode_length")
        }
    cpc = results["cpc"]
    for baseline in ("no-comm", "message"):
        other = results[baseline]
        assert cpc["welfare"][1][0] > other["welfare"][1][1]
        assert cpc["episode_length"][1][1] < other["episode_length"][1][0]
    assert results["shared"]["welfare"][0] >= cpc["welfare"][0] - 0.05
