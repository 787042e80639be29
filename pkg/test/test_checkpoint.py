import os

import numpy as np
import pytest

from marlcpc import checkpoint
from marlcpc.agents import buildAgents
from marlcpc.BanditCPC import banditUpdate, collectEpisodes
from marlcpc.config import defaultConfig
from marlcpc.envs import BanditEnv, EnvPool
from marlcpc.errors import CheckpointError
from marlcpc.evaluate import evaluate

seed = 4
this_file = os.path.abspath(__file__)
missing_file = "/not/a/checkpoint.ckpt"


def trained(condition="cpc"):
    config = defaultConfig("bandit", condition, seed=seed)
    rng = np.random.default_rng(seed)
    pool = EnvPool([BanditEnv(rng=rng) for _ in range(16)])
    bundles = buildAgents(config, pool, rng)
    batch = collectEpisodes(bundles, pool, rng)
    banditUpdate(bundles, batch, config.trainer, rng)
    return config, bundles


def make_bandit(rng):
    return BanditEnv(rng=rng)


def test_check_file():
    assert checkpoint.check_file(this_file)
    assert not checkpoint.check_file(missing_file)


def test_round_trip_is_byte_identical(tmp_path):
    config, bundles = trained()
    first = str(tmp_path / "first.ckpt")
    second = str(tmp_path / "second.ckpt")
    checkpoint.saveCheckpoint(first, bundles, config, iteration=1, env_steps=16)
    loaded = checkpoint.loadCheckpoint(first)
    assert loaded.iteration == 1
    assert loaded.env_steps == 16
    assert loaded.config == config
    checkpoint.saveCheckpoint(second, loaded.bundles, loaded.config, 1, 16)
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()


def test_loaded_agents_match(tmp_path):
    config, bundles = trained("message")
    path = str(tmp_path / "agents.ckpt")
    checkpoint.saveCheckpoint(path, bundles, config)
    loaded = checkpoint.loadCheckpoint(path)
    for original, restored in zip(bundles, loaded.bundles):
        assert restored.optimizer.step == original.optimizer.step
        for p, q in zip(original.parameters(), restored.parameters()):
            assert np.array_equal(p.value, q.value)
        for m, n in zip(original.optimizer.v, restored.optimizer.v):
            assert np.array_equal(m, n)
    before = evaluate(bundles, make_bandit, 64, seed=seed)
    after = evaluate(loaded.bundles, make_bandit, 64, seed=seed)
    assert np.array_equal(before.episode_welfare, after.episode_welfare)


def test_corrupted_files(tmp_path):
    config, bundles = trained("no-comm")
    path = str(tmp_path / "agents.ckpt")
    checkpoint.saveCheckpoint(path, bundles, config)
    with open(path, "rb") as f:
        data = f.read()

    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(data[:-1])
    with pytest.raises(CheckpointError, match="truncated while reading agent1"):
        checkpoint.loadCheckpoint(str(truncated))

    header_cut = tmp_path / "header.ckpt"
    header_cut.write_bytes(data[:20])
    with pytest.raises(CheckpointError, match="header"):
        checkpoint.loadCheckpoint(str(header_cut))

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loadCheckpoint(str(bad_magic))

    trailing = tmp_path / "trailing.ckpt"
    trailing.write_bytes(data + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint.loadCheckpoint(str(trailing))

    with pytest.raises(CheckpointError):
        checkpoint.loadCheckpoint(missing_file)
