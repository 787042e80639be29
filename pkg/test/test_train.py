import os

import numpy as np
import pandas as pd

from marlcpc import train
from marlcpc.checkpoint import loadCheckpoint
from marlcpc.config import applyOverrides, defaultConfig, readConfig

seed = 2
bandit_overrides = {
    "budget": 512,
    "bandit_batch": 256,
    "eval_interval": 1,
    "eval_episodes": 64,
    "checkpoint_interval": 1,
}
observer_overrides = {
    "budget": 64,
    "n_workers": 2,
    "steps_per_worker": 16,
    "max_steps": 8,
    "eval_interval": 2,
    "eval_episodes": 8,
}


def bandit_config(condition="cpc", **extra):
    config = defaultConfig("bandit", condition, seed=seed)
    return applyOverrides(config, {**bandit_overrides, **extra})


def test_numIterations():
    assert train.numIterations(bandit_config()) == 2
    assert train.numIterations(bandit_config(budget=700)) == 2
    observer = applyOverrides(defaultConfig("observer", "cpc"), observer_overrides)
    assert train.numIterations(observer) == 2


def test_isEvalPoint():
    config = bandit_config(budget=256 * 7, eval_interval=3)
    points = [k for k in range(8) if train.isEvalPoint(config, k)]
    assert points == [0, 3, 6, 7]


def test_zero_budget(tmp_path):
    config = bandit_config(budget=0)
    output_dir = train.trainRun(config, str(tmp_path), quiet=True)
    metrics = pd.read_csv(os.path.join(output_dir, train.METRICS_FILE))
    assert len(metrics) == 1
    assert metrics["iteration"][0] == 0
    assert metrics["env_steps"][0] == 0
    assert np.isfinite(metrics["welfare"][0])
    assert np.isnan(metrics["rl_loss_0"][0])
    assert train.isComplete(output_dir)
    assert readConfig(os.path.join(output_dir, train.CONFIG_FILE)) == config
    final = loadCheckpoint(os.path.join(output_dir, train.FINAL_CHECKPOINT))
    assert final.iteration == 0


def test_bandit_run(tmp_path):
    output_dir = train.trainRun(bandit_config(), str(tmp_path), quiet=True)
    metrics = pd.read_csv(os.path.join(output_dir, train.METRICS_FILE))
    assert list(metrics.columns) == train.METRIC_COLUMNS
    assert metrics["iteration"].tolist() == [0, 1, 2]
    assert metrics["env_steps"].tolist() == [0, 256, 512]
    assert metrics["welfare"].notna().all()
    assert metrics["cpc_0"][1:].notna().all()
    assert os.path.isfile(os.path.join(output_dir, "checkpoint-1.ckpt"))
    final = loadCheckpoint(os.path.join(output_dir, train.FINAL_CHECKPOINT))
    assert final.env_steps == 512
    assert final.bundles[0].optimizer.step > 0


def test_runs_are_deterministic(tmp_path):
    first = train.trainRun(bandit_config("message"), str(tmp_path / "a"), quiet=True)
    second = train.trainRun(bandit_config("message"), str(tmp_path / "b"), quiet=True)
    with open(os.path.join(first, train.METRICS_FILE)) as a:
        with open(os.path.join(second, train.METRICS_FILE)) as b:
            assert a.read() == b.read()


def test_observer_run():
    config = applyOverrides(
        defaultConfig("observer", "cpc", seed=seed), observer_overrides
    )
    rows = list(train.runTraining(config))
    assert [row["iteration"] for row in rows] == [0, 1, 2]
    assert rows[-1]["env_steps"] == 64
    assert np.isnan(rows[1]["welfare"])
    assert np.isfinite(rows[2]["welfare"])
    assert np.isfinite(rows[1]["kl_1"])
    assert rows[2]["episodes"] >= 64 // 8


def test_done_marker_records_iterations(tmp_path):
    output_dir = train.trainRun(bandit_config(budget=0), str(tmp_path), quiet=True)
    assert train.isComplete(output_dir)
    with open(os.path.join(output_dir, train.DONE_MARKER)) as f:
        assert f.read().strip() == "0"
