import random

import numpy as np
import pytest

from marlcpc import utils
from marlcpc.errors import ConditionError, ContractError, EnvironmentNameError

condition = "cpc"
env = "observer"
random_str = "{num:06d}.xyz".format(num=random.randint(1e6, 1e7 - 1))


def test_listConditions():
    conditions = utils.listConditions()
    assert condition in conditions
    assert random_str not in conditions
    assert len(conditions) == 4


def test_validateCondition():
    utils.validateCondition(condition)
    with pytest.raises(ConditionError):
        utils.validateCondition(random_str)


def test_isCommunicating():
    assert utils.isCommunicating("cpc")
    assert utils.isCommunicating("message")
    assert not utils.isCommunicating("no-comm")
    assert not utils.isCommunicating("shared")


def test_listEnvironments():
    envs = utils.listEnvironments()
    assert env in envs
    assert "bandit-coop" in envs
    assert random_str not in envs


def test_validateEnvironment():
    utils.validateEnvironment(env)
    with pytest.raises(EnvironmentNameError):
        utils.validateEnvironment(random_str)


def test_listAblationModes():
    assert utils.listAblationModes() == ["none", "random", "zero"]


def test_onehot():
    encoded = utils.onehot(np.array([0, 2]), 3)
    assert np.array_equal(encoded, [[1, 0, 0], [0, 0, 1]])
    assert utils.onehot(5, 16)[5] == 1
    with pytest.raises(ContractError):
        utils.onehot(3, 3)


def test_spawnGenerators():
    a = utils.spawnGenerators(0, 3)
    b = utils.spawnGenerators(0, 3)
    draws_a = [g.random() for g in a]
    draws_b = [g.random() for g in b]
    assert draws_a == draws_b
    assert len(set(draws_a)) == 3


def test_seedStreams():
    streams = utils.seedStreams(1)
    assert set(streams) == {"init", "env", "rollout", "update", "eval"}
    other = utils.seedStreams(2)
    assert streams["eval"].random() != other["eval"].random()


def test_sampleCategorical():
    rng = np.random.default_rng(0)
    probs = np.array([0.2, 0.5, 0.3])
    n = 100000
    draws = utils.sampleCategorical(np.tile(probs, (n, 1)), rng)
    frequencies = np.bincount(draws, minlength=3) / n
    sigma = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(frequencies - probs) < 3 * sigma)

    certain = utils.sampleCategorical(np.array([[0.0, 1.0], [1.0, 0.0]]), rng)
    assert np.array_equal(certain, [1, 0])


def test_sampleCategorical_per_row_streams():
    probs = np.full((3, 4), 0.25)
    first = utils.sampleCategorical(probs, utils.spawnGenerators(5, 3))
    second = utils.sampleCategorical(probs, utils.spawnGenerators(5, 3))
    assert np.array_equal(first, second)
    with pytest.raises(ContractError):
        utils.sampleCategorical(probs, utils.spawnGenerators(5, 2))
